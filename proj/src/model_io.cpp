#include "kst/model_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <system_error>

#include "kst/dataset.hpp"
#include "kst/errors.hpp"
#include "kst/kernel.hpp"

static_assert(std::endian::native == std::endian::little,
              "KSTD1 writer assumes a little-endian host");
static_assert(sizeof(double) == 8);

namespace kst {

namespace {

const char* family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::SquaredExponential: return "se";
    case KernelFamily::Laplacian: return "laplacian";
    case KernelFamily::Polynomial: return "polynomial";
    case KernelFamily::ExplicitMap: return "map";
  }
  return "?";
}

void put_doubles(std::ofstream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

void get_doubles(std::ifstream& in, double* data, std::size_t count) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8));
  if (static_cast<std::size_t>(in.gcount()) != count * 8)
    throw input_error("model file truncated in binary section");
}

double parse_header_double(const std::string& value, const std::string& key) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw input_error("model header: bad numeric value for " + key);
  return v;
}

long parse_header_int(const std::string& value, const std::string& key) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw input_error("model header: bad integer value for " + key);
  return v;
}

}  // namespace

void save_model(const std::string& path, const FittedKstModel& model) {
  if (model.kernel.family == KernelFamily::ExplicitMap &&
      (!model.kernel.map || model.kernel.map->name.empty()))
    throw unsupported_error("save_model: only registry-named feature maps can be persisted");

  std::string header;
  header += "format=KSTD1\n";
  header += std::string("kernel=") + family_name(model.kernel.family) + "\n";
  if (model.kernel.family == KernelFamily::Polynomial)
    header += "degree=" + std::to_string(model.kernel.degree) + "\n";
  if (model.kernel.family == KernelFamily::ExplicitMap)
    header += "map=" + model.kernel.map->name + "\n";
  if (model.kernel.length_scales.size() > 0) {
    header += "length_scales=";
    for (Index i = 0; i < model.kernel.length_scales.size(); ++i) {
      if (i > 0) header += ',';
      header += format_double(model.kernel.length_scales[i]);
    }
    header += '\n';
  }
  header += "sigma0_sq=" + format_double(model.hyper.sigma0_sq) + "\n";
  header += "alpha=" + format_double(model.hyper.alpha) + "\n";
  header += "beta=" + format_double(model.hyper.beta) + "\n";
  header += "n=" + std::to_string(model.n()) + "\n";
  header += "d=" + std::to_string(model.dim()) + "\n";
  header += "jitter_used=" + format_double(model.jitter_used) + "\n";
  header += "\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw input_error("cannot write model file: " + tmp);
    out << header;

    const Index n = model.n();
    if (n > 0) {
      put_doubles(out, model.X_train.data(), static_cast<std::size_t>(model.X_train.size()));
      put_doubles(out, model.row_sums.data(), static_cast<std::size_t>(n));
      put_doubles(out, model.K_diag.data(), static_cast<std::size_t>(n));
      put_doubles(out, &model.total_sum, 1);
      // Lower triangle of the Cholesky factor, row-major packed.
      std::vector<double> packed;
      packed.reserve(static_cast<std::size_t>(n) * (n + 1) / 2);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j <= i; ++j) packed.push_back(model.chol_M(i, j));
      put_doubles(out, packed.data(), packed.size());
    }
    if (!out) throw input_error("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw input_error("rename failed for " + path + ": " + ec.message());
}

FittedKstModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open model file: " + path);

  std::map<std::string, std::string> kv;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) break;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw input_error("model header: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
    if (first && (line.substr(0, eq) != "format" || line.substr(eq + 1) != "KSTD1"))
      throw input_error("not a KSTD1 model file: " + path);
    first = false;
  }
  if (first) throw input_error("empty model file: " + path);

  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw input_error("model header: missing key " + key);
    return it->second;
  };

  const Index n = static_cast<Index>(parse_header_int(need("n"), "n"));
  const Index d = static_cast<Index>(parse_header_int(need("d"), "d"));
  if (n < 0 || d < 0) throw input_error("model header: negative n or d");

  Vector ls(0);
  if (auto it = kv.find("length_scales"); it != kv.end()) {
    std::vector<double> vals;
    std::size_t start = 0;
    const std::string& s = it->second;
    while (start <= s.size()) {
      std::size_t pos = s.find(',', start);
      std::string tok = s.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
      vals.push_back(parse_header_double(tok, "length_scales"));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    ls.resize(static_cast<Index>(vals.size()));
    for (Index i = 0; i < ls.size(); ++i) ls[i] = vals[static_cast<std::size_t>(i)];
  }

  KernelSpec kernel;
  const std::string& fam = need("kernel");
  if (fam == "se") {
    kernel = KernelSpec::squared_exponential(ls);
  } else if (fam == "laplacian") {
    kernel = KernelSpec::laplacian(ls);
  } else if (fam == "polynomial") {
    kernel = KernelSpec::polynomial(static_cast<int>(parse_header_int(need("degree"), "degree")));
  } else if (fam == "map") {
    kernel = KernelSpec::explicit_map(feature_map_from_registry(need("map"), d));
  } else {
    throw input_error("model header: unknown kernel '" + fam + "'");
  }

  Hyperparams hyper;
  hyper.sigma0_sq = parse_header_double(need("sigma0_sq"), "sigma0_sq");
  hyper.alpha = parse_header_double(need("alpha"), "alpha");
  hyper.beta = parse_header_double(need("beta"), "beta");
  hyper.validate();
  kernel.validate();

  FittedKstModel model;
  model.kernel = std::move(kernel);
  model.hyper = hyper;
  model.jitter_used = parse_header_double(need("jitter_used"), "jitter_used");
  model.gamma = (1.0 + hyper.beta + static_cast<double>(n)) / (hyper.beta + static_cast<double>(n));
  model.exponent = (1.0 + static_cast<double>(n) + hyper.alpha) / 2.0;

  model.X_train.resize(n, d);
  if (n > 0) {
    get_doubles(in, model.X_train.data(), static_cast<std::size_t>(model.X_train.size()));
    model.row_sums.resize(n);
    get_doubles(in, model.row_sums.data(), static_cast<std::size_t>(n));
    model.K_diag.resize(n);
    get_doubles(in, model.K_diag.data(), static_cast<std::size_t>(n));
    get_doubles(in, &model.total_sum, 1);

    std::vector<double> packed(static_cast<std::size_t>(n) * (n + 1) / 2);
    get_doubles(in, packed.data(), packed.size());
    model.chol_M = Matrix::Zero(n, n);
    std::size_t idx = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j <= i; ++j) model.chol_M(i, j) = packed[idx++];
    for (Index i = 0; i < n; ++i)
      if (!(model.chol_M(i, i) > 0))
        throw numerical_error("load_model: stored factor has a non-positive diagonal");
  } else {
    model.row_sums.resize(0);
    model.K_diag.resize(0);
    model.total_sum = 0;
  }

  char extra = 0;
  if (in.read(&extra, 1); in.gcount() != 0)
    throw input_error("model file has trailing bytes");
  return model;
}

}  // namespace kst
