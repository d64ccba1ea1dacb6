// Command-line front end: data ingestion, model persistence, task execution,
// and plot-ready grid exports. Exit codes: 0 success, 2 input error,
// 3 numerical-conditioning error, 4 unsupported operation.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kst/dataset.hpp"
#include "kst/density.hpp"
#include "kst/errors.hpp"
#include "kst/kde.hpp"
#include "kst/kernel.hpp"
#include "kst/model_io.hpp"
#include "kst/sampler.hpp"
#include "kst/tasks.hpp"

namespace {

using namespace kst;

struct KernelFlags {
  std::string kernel = "se";
  std::vector<double> length_scales;
  int degree = 2;
};

struct HyperFlags {
  double sigma0_sq = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
};

void add_kernel_flags(CLI::App& cmd, KernelFlags& kf, HyperFlags& hf) {
  cmd.add_option("--kernel", kf.kernel,
                 "Kernel family: se, laplacian, polynomial, or map:<name> (linear, parabola)");
  cmd.add_option("--length-scale", kf.length_scales,
                 "Length scale; repeat for per-dimension ARD values. Default: median heuristic "
                 "on the training data");
  cmd.add_option("--degree", kf.degree, "Polynomial degree");
  cmd.add_option("--sigma0-sq", hf.sigma0_sq, "Prior scale sigma0^2");
  cmd.add_option("--alpha", hf.alpha, "Prior degrees-of-freedom alpha");
  cmd.add_option("--beta", hf.beta, "Prior mean concentration beta");
}

Vector to_vector(const std::vector<double>& v) {
  Vector out(static_cast<Index>(v.size()));
  for (Index i = 0; i < out.size(); ++i) out[i] = v[static_cast<std::size_t>(i)];
  return out;
}

// Builds the kernel from flags. Kernels with length scales fall back to the
// median heuristic on train when no --length-scale was given.
KernelSpec make_kernel(const KernelFlags& kf, const Matrix* train, Index dim) {
  if (kf.kernel == "se" || kf.kernel == "laplacian") {
    Vector ls;
    if (!kf.length_scales.empty()) {
      ls = to_vector(kf.length_scales);
    } else {
      if (!train) throw input_error("--length-scale required (no training data for the median heuristic)");
      ls.resize(1);
      ls[0] = median_heuristic(*train);
    }
    return kf.kernel == "se" ? KernelSpec::squared_exponential(ls) : KernelSpec::laplacian(ls);
  }
  if (kf.kernel == "polynomial") return KernelSpec::polynomial(kf.degree);
  if (kf.kernel.rfind("map:", 0) == 0)
    return KernelSpec::explicit_map(feature_map_from_registry(kf.kernel.substr(4), dim));
  throw input_error("unknown kernel '" + kf.kernel + "'");
}

Hyperparams make_hyper(const HyperFlags& hf) {
  Hyperparams h{hf.sigma0_sq, hf.alpha, hf.beta};
  h.validate();
  return h;
}

Method parse_method(const std::string& m) {
  if (m == "kst") return Method::Kst;
  if (m == "kde") return Method::Kde;
  throw input_error("unknown method '" + m + "' (expected kst or kde)");
}

// Inclusive uniform grid over [lo, hi]^d for d in {1, 2}; rows in row-major
// order (last coordinate fastest). Emits coordinates plus the unnormalized
// log density.
void export_density_grid(const FittedKstModel& model, const std::vector<double>& lo,
                         const std::vector<double>& hi, int resolution, const std::string& out) {
  const Index d = model.dim();
  if (d < 1 || d > 2) throw unsupported_error("grid export supports d in {1, 2}");
  if (resolution < 2) throw input_error("grid resolution must be >= 2");
  if (static_cast<Index>(lo.size()) != d || static_cast<Index>(hi.size()) != d)
    throw input_error("need one --lo and one --hi per model dimension");
  for (Index i = 0; i < d; ++i)
    if (!(lo[static_cast<std::size_t>(i)] < hi[static_cast<std::size_t>(i)]))
      throw input_error("grid bounds must satisfy lo < hi");

  const Index rows = d == 1 ? resolution : static_cast<Index>(resolution) * resolution;
  Matrix Q(rows, d);
  if (d == 1) {
    for (Index i = 0; i < resolution; ++i)
      Q(i, 0) = lo[0] + (hi[0] - lo[0]) * static_cast<double>(i) / (resolution - 1);
  } else {
    Index r = 0;
    for (Index i = 0; i < resolution; ++i)
      for (Index j = 0; j < resolution; ++j, ++r) {
        Q(r, 0) = lo[0] + (hi[0] - lo[0]) * static_cast<double>(i) / (resolution - 1);
        Q(r, 1) = lo[1] + (hi[1] - lo[1]) * static_cast<double>(j) / (resolution - 1);
      }
  }
  Vector scores = log_density_batch(model, Q);
  Matrix table(rows, d + 1);
  table.leftCols(d) = Q;
  table.col(d) = scores;
  write_matrix_csv(out, table);
}

int run(int argc, char** argv) {
  CLI::App app{"kernel Student-t density estimation toolchain"};
  app.require_subcommand(1);

  // Shared flag storage; each subcommand registers the subset it uses.
  KernelFlags kf;
  HyperFlags hf;
  std::uint64_t seed = 0;
  std::string data_path, model_path, out_path, train_path, test_path, validation_path;
  std::string background_path, target_path, method_str = "kst", jacobian_mode = "auto";
  bool has_header = false, usps = false;
  std::optional<Index> label_column;
  auto add_label_column = [&](CLI::App* cmd, const char* help) {
    cmd->add_option("--label-column", [&label_column](const std::vector<std::string>& v) {
      label_column = static_cast<Index>(std::stoll(v.at(0)));
      return true;
    }, help);
  };

  // fit
  CLI::App* c_fit = app.add_subcommand("fit", "Fit a model on CSV data and save it");
  c_fit->add_option("--data", data_path, "Training CSV")->required();
  c_fit->add_flag("--has-header", has_header, "Skip the first CSV line");
  add_label_column(c_fit, "0-based column to strip from the features");
  add_kernel_flags(*c_fit, kf, hf);
  c_fit->add_option("--model", model_path, "Output model path")->required();
  c_fit->add_option("--seed", seed, "Random seed (unused by fit; accepted for uniformity)");

  // score
  CLI::App* c_score = app.add_subcommand("score", "Log densities for query points");
  c_score->add_option("--method", method_str, "kst or kde");
  c_score->add_option("--model", model_path, "Fitted model (kst)");
  c_score->add_option("--train", train_path, "Training CSV (kde)");
  double bandwidth = 1.0;
  CLI::Option* bw_opt = c_score->add_option("--bandwidth", bandwidth, "Gaussian window width (kde)");
  c_score->add_option("--data", data_path, "Query CSV")->required();
  c_score->add_option("--jacobian", jacobian_mode,
                      "auto, on, or off (input-space volume correction; kst only)");
  c_score->add_option("--out", out_path, "Output CSV (one log density per row)")->required();
  c_score->add_option("--seed", seed, "Random seed (unused by score; accepted for uniformity)");

  // novelty
  CLI::App* c_novelty = app.add_subcommand("novelty", "Grid-searched novelty detection");
  c_novelty->add_option("--train", train_path, "Training data (CSV, or USPS text with --usps)")
      ->required();
  c_novelty->add_option("--test", test_path, "Test data")->required();
  c_novelty->add_option("--validation", validation_path, "Validation data (CSV mode)");
  add_label_column(c_novelty, "0-based binary label column in test/validation CSVs");
  c_novelty->add_option("--method", method_str, "kst or kde");
  c_novelty->add_flag("--usps", usps, "Run the digit protocol on USPS-format files");
  int n_train = 2000, n_eval = 100;
  c_novelty->add_option("--n-train", n_train, "Training subset size (USPS mode)");
  c_novelty->add_option("--n-eval", n_eval, "Correct/mislabelled count per split (USPS mode)");
  c_novelty->add_option("--seed", seed, "Random seed");
  c_novelty->add_option("--out", out_path, "Report prefix")->required();

  // reconstruct
  CLI::App* c_rec = app.add_subcommand("reconstruct", "Label reconstruction");
  c_rec->add_option("--train", train_path, "USPS training file (with --usps)");
  c_rec->add_option("--test", test_path, "USPS test file (with --usps)");
  c_rec->add_flag("--usps", usps, "Run the digit protocol on USPS-format files");
  c_rec->add_option("--model", model_path, "Fitted model on augmented vectors (CSV mode)");
  c_rec->add_option("--data", data_path, "Image CSV (CSV mode)");
  int n_classes = 10, n_test = 400;
  c_rec->add_option("--n-classes", n_classes, "Number of classes");
  c_rec->add_option("--n-train", n_train, "Training subset size (USPS mode)");
  c_rec->add_option("--n-test", n_test, "Test image count (USPS mode)");
  c_rec->add_option("--seed", seed, "Random seed");
  c_rec->add_option("--out", out_path, "Report prefix")->required();

  // relnovel
  CLI::App* c_rel = app.add_subcommand("relnovel", "Relative novelty: target vs background");
  c_rel->add_option("--background", background_path, "Background CSV")->required();
  c_rel->add_option("--target", target_path, "Target CSV")->required();
  double top_fraction = 0.05;
  c_rel->add_option("--top-fraction", top_fraction, "Fraction of target items to flag");
  add_kernel_flags(*c_rel, kf, hf);
  c_rel->add_option("--seed", seed, "Random seed (unused; accepted for uniformity)");
  c_rel->add_option("--out", out_path, "Output CSV (score,flag per target row)")->required();

  // sample
  CLI::App* c_sample = app.add_subcommand("sample", "Draw fantasy data from the model");
  int n_points = 50, grid_res = 256;
  Index sample_dim = 1;
  double step_size = 0, grid_lo = 0, grid_hi = 0;
  int n_leapfrog = 20, burn_in = 200;
  c_sample->add_option("--n-points", n_points, "Number of fantasy points")->required();
  c_sample->add_option("--dim", sample_dim, "Input dimension");
  add_kernel_flags(*c_sample, kf, hf);
  c_sample->add_option("--step-size", step_size, "Leapfrog step size (default 0.1 x min length scale)");
  c_sample->add_option("--leapfrog", n_leapfrog, "Leapfrog steps per proposal");
  c_sample->add_option("--burn-in", burn_in, "Burn-in iterations per chain");
  c_sample->add_option("--seed", seed, "Random seed");
  c_sample->add_option("--out", out_path, "Samples CSV")->required();
  std::string grid_out;
  c_sample->add_option("--grid-out", grid_out, "Also export a density grid (d <= 2)");
  CLI::Option* glo = c_sample->add_option("--grid-lo", grid_lo, "Grid lower bound");
  CLI::Option* ghi = c_sample->add_option("--grid-hi", grid_hi, "Grid upper bound");
  c_sample->add_option("--grid-res", grid_res, "Grid resolution per axis");

  // gridsearch
  CLI::App* c_grid = app.add_subcommand("gridsearch", "Hyperparameter search on a validation set");
  c_grid->add_option("--train", train_path, "Training CSV")->required();
  c_grid->add_option("--validation", validation_path, "Validation CSV with binary labels")
      ->required();
  add_label_column(c_grid, "0-based binary label column in the validation CSV");
  c_grid->add_option("--method", method_str, "kst or kde");
  c_grid->add_option("--seed", seed, "Random seed (unused; accepted for uniformity)");
  c_grid->add_option("--out", out_path, "Trace output path")->required();

  // grid-export
  CLI::App* c_export = app.add_subcommand("grid-export", "Density values on a uniform grid");
  c_export->add_option("--model", model_path, "Fitted model")->required();
  std::vector<double> lo, hi;
  int resolution = 256;
  c_export->add_option("--lo", lo, "Lower bound per dimension")->required();
  c_export->add_option("--hi", hi, "Upper bound per dimension")->required();
  c_export->add_option("--resolution", resolution, "Points per axis");
  c_export->add_option("--seed", seed, "Random seed (unused; accepted for uniformity)");
  c_export->add_option("--out", out_path, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*c_fit) {
    Dataset data = load_csv(data_path, has_header, label_column);
    KernelSpec kernel = make_kernel(kf, &data.X, data.dim());
    FittedKstModel model = fit(kernel, make_hyper(hf), data.X);
    save_model(model_path, model);
    std::printf("fitted n=%lld d=%lld jitter_used=%s\n", static_cast<long long>(model.n()),
                static_cast<long long>(model.dim()), format_double(model.jitter_used).c_str());
  } else if (*c_score) {
    Dataset query = load_csv(data_path, false, std::nullopt);
    Vector scores;
    if (parse_method(method_str) == Method::Kst) {
      if (model_path.empty()) throw input_error("score --method kst requires --model");
      FittedKstModel model = load_model(model_path);
      if (jacobian_mode == "auto")
        scores = log_density_batch(model, query.X);
      else if (jacobian_mode == "on")
        scores = log_density_batch(model, query.X, true);
      else if (jacobian_mode == "off")
        scores = log_density_batch(model, query.X, false);
      else
        throw input_error("--jacobian must be auto, on, or off");
    } else {
      if (train_path.empty() || !*bw_opt)
        throw input_error("score --method kde requires --train and --bandwidth");
      Dataset train = load_csv(train_path, false, std::nullopt);
      scores = kde_log_density_batch(kde_fit(train.X, bandwidth), query.X);
    }
    write_matrix_csv(out_path, scores);
  } else if (*c_novelty) {
    EvalReport report;
    if (usps) {
      if (parse_method(method_str) != Method::Kst)
        throw unsupported_error("the USPS protocol is defined for --method kst only");
      DigitProtocolConfig cfg;
      cfg.n_train = n_train;
      cfg.n_eval = n_eval;
      cfg.seed = seed;
      report = usps_novelty(load_usps(train_path), load_usps(test_path), cfg);
    } else {
      if (validation_path.empty()) throw input_error("novelty requires --validation");
      if (!label_column) throw input_error("novelty requires --label-column");
      Dataset train = load_csv(train_path, false, std::nullopt);
      Dataset test = load_csv(test_path, false, label_column);
      Dataset validation = load_csv(validation_path, false, label_column);
      Method method = parse_method(method_str);
      std::vector<GridCell> grid = method == Method::Kst ? default_grid(train.X)
                                                         : default_bandwidth_grid(train.X);
      report = novelty_task(train, test, method, grid, validation);
      report.seed = seed;
    }
    write_report(out_path, report);
    std::printf("auc=%s\n", format_double(report.auc).c_str());
  } else if (*c_rec) {
    if (usps) {
      if (train_path.empty() || test_path.empty())
        throw input_error("reconstruct --usps requires --train and --test");
      DigitProtocolConfig cfg;
      cfg.n_train = n_train;
      cfg.n_test = n_test;
      cfg.seed = seed;
      EvalReport report = usps_reconstruction(load_usps(train_path), load_usps(test_path), cfg);
      write_report(out_path, report);
      std::printf("confusion=%s\n", format_double(report.confusion).c_str());
    } else {
      if (model_path.empty() || data_path.empty())
        throw input_error("reconstruct requires --model and --data (or --usps)");
      FittedKstModel model = load_model(model_path);
      Dataset images = load_csv(data_path, false, std::nullopt);
      Reconstruction rec = reconstruct_labels(model, images.X, n_classes);
      Matrix table(images.n(), 1 + n_classes);
      for (Index i = 0; i < images.n(); ++i) {
        table(i, 0) = rec.predicted[static_cast<std::size_t>(i)];
        table.row(i).tail(n_classes) = rec.log_posteriors.row(i);
      }
      write_matrix_csv(out_path, table);
    }
  } else if (*c_rel) {
    Dataset bg = load_csv(background_path, false, std::nullopt);
    Dataset target = load_csv(target_path, false, std::nullopt);
    KernelSpec kernel = make_kernel(kf, &bg.X, bg.dim());
    RelativeNoveltyResult res = relative_novelty(bg, target, top_fraction, kernel, make_hyper(hf));
    std::string csv;
    for (Index i = 0; i < res.scores.size(); ++i)
      csv += format_double(res.scores[i]) + "," +
             std::to_string(static_cast<int>(res.flagged[static_cast<std::size_t>(i)])) + "\n";
    atomic_write_text(out_path, csv);
  } else if (*c_sample) {
    KernelSpec kernel = make_kernel(kf, nullptr, sample_dim);
    Hyperparams hyper = make_hyper(hf);
    HmcConfig cfg = HmcConfig::defaults_for(kernel);
    if (step_size > 0) cfg.step_size = step_size;
    cfg.n_leapfrog = n_leapfrog;
    cfg.burn_in = burn_in;
    cfg.seed = seed;
    Matrix samples = fantasy_dataset(kernel, hyper, n_points, sample_dim, cfg);
    write_matrix_csv(out_path, samples);
    if (!grid_out.empty()) {
      if (!*glo || !*ghi) throw input_error("--grid-out requires --grid-lo and --grid-hi");
      FittedKstModel model = fit(kernel, hyper, samples);
      export_density_grid(model, std::vector<double>(static_cast<std::size_t>(sample_dim), grid_lo),
                          std::vector<double>(static_cast<std::size_t>(sample_dim), grid_hi),
                          grid_res, grid_out);
    }
  } else if (*c_grid) {
    if (!label_column) throw input_error("gridsearch requires --label-column");
    Dataset train = load_csv(train_path, false, std::nullopt);
    Dataset validation = load_csv(validation_path, false, label_column);
    Method method = parse_method(method_str);
    std::vector<GridCell> grid = method == Method::Kst ? default_grid(train.X)
                                                       : default_bandwidth_grid(train.X);
    GridSearchResult res = grid_search(grid, method, [&](const GridCell& cell) {
      Vector scores;
      if (method == Method::Kst) {
        FittedKstModel model = fit(cell.kernel, cell.hyper, train.X);
        scores = log_density_batch(model, validation.X);
      } else {
        scores = kde_log_density_batch(kde_fit(train.X, cell.bandwidth), validation.X);
      }
      return auc(scores, *validation.labels);
    });
    std::string txt = "best_cell=" + res.trace[static_cast<std::size_t>(res.best_index)].first +
                      "\nbest_metric=" + format_double(res.best_metric) + "\ntrace:\n";
    for (const auto& [desc, metric] : res.trace)
      txt += "  " + desc + " -> " + format_double(metric) + "\n";
    atomic_write_text(out_path, txt);
    std::printf("best=%s metric=%s\n",
                res.trace[static_cast<std::size_t>(res.best_index)].first.c_str(),
                format_double(res.best_metric).c_str());
  } else if (*c_export) {
    FittedKstModel model = load_model(model_path);
    if (static_cast<Index>(lo.size()) == 1 && model.dim() == 2) {
      lo.push_back(lo[0]);
      hi.push_back(hi[0]);
    }
    export_density_grid(model, lo, hi, resolution, out_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const kst::input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const kst::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const kst::unsupported_error& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
