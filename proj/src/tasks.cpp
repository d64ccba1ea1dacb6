#include "kst/tasks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "kst/errors.hpp"
#include "kst/kde.hpp"
#include "kst/rng.hpp"

namespace kst {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string length_scale_desc(const Vector& ls) {
  if (ls.size() == 0) return "-";
  const double lo = ls.minCoeff(), hi = ls.maxCoeff();
  if (lo == hi) return format_double(lo);
  return format_double(lo) + ".." + format_double(hi) + "(d=" + std::to_string(ls.size()) + ")";
}

void require_binary_labels(const Dataset& d, const char* who) {
  if (!d.labels) throw input_error(std::string(who) + ": dataset needs binary labels");
  bool has0 = false, has1 = false;
  for (int l : *d.labels) {
    if (l == 0) has0 = true;
    else if (l == 1) has1 = true;
    else throw input_error(std::string(who) + ": labels must be 0 or 1");
  }
  if (!has0 || !has1)
    throw input_error(std::string(who) + ": need both a positive and a negative label");
}

}  // namespace

std::string describe(const GridCell& cell, Method method) {
  if (method == Method::Kde) return "bandwidth=" + format_double(cell.bandwidth);
  std::string s;
  switch (cell.kernel.family) {
    case KernelFamily::SquaredExponential: s = "kernel=se"; break;
    case KernelFamily::Laplacian: s = "kernel=laplacian"; break;
    case KernelFamily::Polynomial:
      s = "kernel=polynomial degree=" + std::to_string(cell.kernel.degree);
      break;
    case KernelFamily::ExplicitMap:
      s = "kernel=map:" + (cell.kernel.map ? cell.kernel.map->name : std::string("?"));
      break;
  }
  if (cell.kernel.length_scales.size() > 0)
    s += " ls=" + length_scale_desc(cell.kernel.length_scales);
  s += " sigma0_sq=" + format_double(cell.hyper.sigma0_sq);
  s += " alpha=" + format_double(cell.hyper.alpha);
  s += " beta=" + format_double(cell.hyper.beta);
  return s;
}

double auc(const Vector& scores, const std::vector<int>& labels) {
  const Index n = scores.size();
  if (static_cast<Index>(labels.size()) != n) throw input_error("auc: scores/labels length mismatch");
  Index n_pos = 0, n_neg = 0;
  for (int l : labels) {
    if (l == 1) ++n_pos;
    else if (l == 0) ++n_neg;
    else throw input_error("auc: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0) throw input_error("auc: need both classes");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return scores[a] < scores[b]; });

  // Midranks over tied score groups; rank sum of the positive class.
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (labels[static_cast<std::size_t>(order[k])] == 1) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1) / 2) / (np * nn);
}

std::vector<GridCell> default_grid(const Matrix& X_train) {
  const double med = median_heuristic(X_train);
  std::vector<GridCell> grid;
  for (double mult : {0.5, 1.0, 2.0}) {
    Vector ls(1);
    ls[0] = mult * med;
    KernelSpec kernel = KernelSpec::squared_exponential(ls);
    for (double s0 : {0.1, 1.0, 10.0})
      for (double a : {0.01, 1.0, 10.0, 100.0})
        for (double b : {0.01, 1.0, 100.0}) {
          GridCell cell;
          cell.kernel = kernel;
          cell.hyper = Hyperparams{s0, a, b};
          grid.push_back(cell);
        }
  }
  return grid;
}

std::vector<GridCell> default_bandwidth_grid(const Matrix& X_train) {
  const double med = median_heuristic(X_train);
  std::vector<GridCell> grid;
  for (double mult : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    GridCell cell;
    cell.bandwidth = mult * med;
    grid.push_back(cell);
  }
  return grid;
}

GridSearchResult grid_search(const std::vector<GridCell>& grid, Method method,
                             const std::function<double(const GridCell&)>& objective) {
  if (grid.empty()) throw input_error("grid_search: grid must be non-empty");

  GridSearchResult res;
  res.best_metric = -std::numeric_limits<double>::infinity();
  std::string failures;
  std::size_t n_failed = 0;

  for (std::size_t c = 0; c < grid.size(); ++c) {
    std::string desc = describe(grid[c], method);
    double metric;
    try {
      metric = objective(grid[c]);
    } catch (const std::exception& e) {
      metric = std::numeric_limits<double>::quiet_NaN();
      desc += std::string(" [failed: ") + e.what() + "]";
      failures += "\n  cell " + std::to_string(c) + ": " + e.what();
      ++n_failed;
    }
    res.trace.emplace_back(std::move(desc), metric);
    if (std::isfinite(metric) && metric > res.best_metric) {
      res.best_metric = metric;
      res.best_index = static_cast<int>(c);
    }
  }
  if (res.best_index < 0)
    throw input_error("grid_search: all " + std::to_string(n_failed) + " cells failed:" + failures);
  return res;
}

namespace {

Vector score_with(const GridCell& cell, Method method, const Matrix& X_train,
                  const Matrix& X_query) {
  if (method == Method::Kst) {
    FittedKstModel model = fit(cell.kernel, cell.hyper, X_train);
    return log_density_batch(model, X_query);
  }
  KdeModel model = kde_fit(X_train, cell.bandwidth);
  return kde_log_density_batch(model, X_query);
}

}  // namespace

EvalReport novelty_task(const Dataset& train, const Dataset& test, Method method,
                        const std::vector<GridCell>& grid, const Dataset& validation) {
  require_binary_labels(test, "novelty_task(test)");
  require_binary_labels(validation, "novelty_task(validation)");
  if (train.dim() != test.dim() || train.dim() != validation.dim())
    throw input_error("novelty_task: dimension mismatch across datasets");

  EvalReport report;
  report.task = Task::Novelty;

  const auto t0 = std::chrono::steady_clock::now();
  GridSearchResult gs = grid_search(grid, method, [&](const GridCell& cell) {
    Vector val_scores = score_with(cell, method, train.X, validation.X);
    return auc(val_scores, *validation.labels);
  });
  report.grid_seconds = seconds_since(t0);
  report.grid_trace = std::move(gs.trace);
  report.best_index = gs.best_index;

  const auto t1 = std::chrono::steady_clock::now();
  report.scores = score_with(grid[static_cast<std::size_t>(gs.best_index)], method, train.X, test.X);
  report.final_seconds = seconds_since(t1);
  report.labels = *test.labels;
  report.auc = auc(report.scores, report.labels);
  return report;
}

Reconstruction reconstruct_labels(const FittedKstModel& model, const Matrix& images,
                                  int n_classes) {
  if (n_classes < 1) throw input_error("reconstruct_labels: n_classes must be >= 1");
  const Index d_img = images.cols();
  if (model.dim() != d_img + n_classes)
    throw input_error("reconstruct_labels: model dimension " + std::to_string(model.dim()) +
                      " does not match image dim + n_classes = " +
                      std::to_string(d_img + n_classes));
  const Index m = images.rows();

  // One batched scoring pass over all (image, class) pairs.
  Matrix queries(m * n_classes, d_img + n_classes);
  for (Index i = 0; i < m; ++i)
    for (int l = 0; l < n_classes; ++l) {
      const Index r = i * n_classes + l;
      queries.row(r).head(d_img) = images.row(i);
      queries.row(r).tail(n_classes).setZero();
      queries(r, d_img + l) = 1.0;
    }
  Vector joint = log_density_batch(model, queries);

  Reconstruction out;
  out.predicted.resize(static_cast<std::size_t>(m));
  out.log_posteriors.resize(m, n_classes);
  for (Index i = 0; i < m; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    int arg = 0;
    double max_e = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < n_classes; ++l) max_e = std::max(max_e, joint[i * n_classes + l]);
    double lse = 0;
    for (int l = 0; l < n_classes; ++l) lse += std::exp(joint[i * n_classes + l] - max_e);
    lse = max_e + std::log(lse);
    for (int l = 0; l < n_classes; ++l) {
      const double lp = joint[i * n_classes + l] - lse;
      out.log_posteriors(i, l) = lp;
      if (lp > best) {
        best = lp;
        arg = l;
      }
    }
    out.predicted[static_cast<std::size_t>(i)] = arg;
  }
  return out;
}

RelativeNoveltyResult relative_novelty(const Dataset& bg, const Dataset& target,
                                       double top_fraction, const KernelSpec& kernel,
                                       const Hyperparams& hyper) {
  if (!(top_fraction > 0) || !(top_fraction < 1))
    throw input_error("relative_novelty: top_fraction must be in (0, 1)");
  if (bg.dim() != target.dim()) throw input_error("relative_novelty: dimension mismatch");

  FittedKstModel bg_model = fit(kernel, hyper, bg.X);
  FittedKstModel tg_model = fit(kernel, hyper, target.X);

  RelativeNoveltyResult out;
  out.scores = log_density_batch(tg_model, target.X) - log_density_batch(bg_model, target.X);

  const Index m = target.n();
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return out.scores[a] > out.scores[b]; });

  const Index n_flag = static_cast<Index>(
      std::ceil(top_fraction * static_cast<double>(m)));
  out.flagged.assign(static_cast<std::size_t>(m), 0);
  for (Index r = 0; r < n_flag && r < m; ++r)
    out.flagged[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = 1;
  return out;
}

namespace {

// Distinct row indices drawn without replacement (partial Fisher-Yates over
// an index vector).
std::vector<Index> sample_rows(Index n_total, Index n_take, SplitMix64& rng, const char* who) {
  if (n_take > n_total)
    throw input_error(std::string(who) + ": asked for " + std::to_string(n_take) +
                      " rows but only " + std::to_string(n_total) + " available");
  std::vector<Index> pool(static_cast<std::size_t>(n_total));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < n_take; ++i) {
    const Index j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n_total - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(n_take));
  return pool;
}

Dataset take_rows(const Dataset& src, const std::vector<Index>& rows) {
  Dataset out;
  out.source = src.source;
  out.X.resize(static_cast<Index>(rows.size()), src.dim());
  std::vector<int> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Index>(i)) = src.X.row(rows[i]);
    if (src.labels) labels.push_back((*src.labels)[static_cast<std::size_t>(rows[i])]);
  }
  if (src.labels) out.labels = std::move(labels);
  return out;
}

constexpr int kDigitClasses = 10;

void require_digit_data(const Dataset& d, const char* who) {
  if (d.dim() != 256) throw input_error(std::string(who) + ": expected 256 pixel columns");
  if (!d.labels) throw input_error(std::string(who) + ": labels required");
  for (int l : *d.labels)
    if (l < 0 || l >= kDigitClasses)
      throw input_error(std::string(who) + ": label out of range 0..9");
}

int wrong_label(int truth, SplitMix64& rng) {
  int l = static_cast<int>(rng.below(kDigitClasses - 1));
  return l >= truth ? l + 1 : l;
}

// ARD-SE over augmented digit vectors: multiplier x median on the 256 pixel
// dims, unit length scale on the 10 label dims.
std::vector<GridCell> digit_grid(double median_pix) {
  std::vector<GridCell> grid;
  for (double mult : {0.5, 1.0, 2.0}) {
    Vector ls(256 + kDigitClasses);
    ls.head(256).setConstant(mult * median_pix);
    ls.tail(kDigitClasses).setOnes();
    KernelSpec kernel = KernelSpec::squared_exponential(ls);
    for (double s0 : {0.1, 1.0, 10.0})
      for (double a : {0.01, 1.0, 10.0, 100.0})
        for (double b : {0.01, 1.0, 100.0}) {
          GridCell cell;
          cell.kernel = kernel;
          cell.hyper = Hyperparams{s0, a, b};
          grid.push_back(cell);
        }
  }
  return grid;
}

}  // namespace

EvalReport usps_novelty(const Dataset& train_raw, const Dataset& test_raw,
                        const DigitProtocolConfig& cfg) {
  require_digit_data(train_raw, "usps_novelty(train)");
  require_digit_data(test_raw, "usps_novelty(test)");
  SplitMix64 rng(cfg.seed);

  const Dataset train = take_rows(train_raw, sample_rows(train_raw.n(), cfg.n_train, rng,
                                                         "usps_novelty(train)"));
  const double median_pix = median_heuristic(train.X);
  const Dataset train_aug = augment_labels(train, kDigitClasses);

  // Two disjoint (correct, mislabelled) splits: validation then test.
  const std::vector<Index> pick =
      sample_rows(test_raw.n(), 4 * static_cast<Index>(cfg.n_eval), rng, "usps_novelty(test)");
  auto build_split = [&](std::size_t offset) {
    Dataset split;
    split.source = test_raw.source;
    std::vector<int> item_labels(static_cast<std::size_t>(2 * cfg.n_eval));
    Dataset base;
    base.source = test_raw.source;
    base.X.resize(2 * cfg.n_eval, 256);
    std::vector<int> digit_labels(static_cast<std::size_t>(2 * cfg.n_eval));
    for (int i = 0; i < 2 * cfg.n_eval; ++i) {
      const Index src_row = pick[offset + static_cast<std::size_t>(i)];
      base.X.row(i) = test_raw.X.row(src_row);
      const int truth = (*test_raw.labels)[static_cast<std::size_t>(src_row)];
      const bool correct = i < cfg.n_eval;
      digit_labels[static_cast<std::size_t>(i)] = correct ? truth : wrong_label(truth, rng);
      item_labels[static_cast<std::size_t>(i)] = correct ? 1 : 0;
    }
    base.labels = std::move(digit_labels);
    split = augment_labels(base, kDigitClasses);
    split.labels = std::move(item_labels);
    return split;
  };
  const Dataset validation = build_split(0);
  const Dataset test = build_split(static_cast<std::size_t>(2 * cfg.n_eval));

  EvalReport report = novelty_task(train_aug, test, Method::Kst, digit_grid(median_pix), validation);
  report.seed = cfg.seed;
  return report;
}

EvalReport usps_reconstruction(const Dataset& train_raw, const Dataset& test_raw,
                               const DigitProtocolConfig& cfg) {
  require_digit_data(train_raw, "usps_reconstruction(train)");
  require_digit_data(test_raw, "usps_reconstruction(test)");
  SplitMix64 rng(cfg.seed);

  const Dataset train = take_rows(train_raw, sample_rows(train_raw.n(), cfg.n_train, rng,
                                                         "usps_reconstruction(train)"));
  const double median_pix = median_heuristic(train.X);
  const Dataset train_aug = augment_labels(train, kDigitClasses);

  const std::vector<Index> pick = sample_rows(test_raw.n(), 2 * static_cast<Index>(cfg.n_test),
                                              rng, "usps_reconstruction(test)");
  const Dataset validation = take_rows(
      test_raw, std::vector<Index>(pick.begin(), pick.begin() + cfg.n_test));
  const Dataset test = take_rows(
      test_raw, std::vector<Index>(pick.begin() + cfg.n_test, pick.end()));

  auto confusion_of = [&](const FittedKstModel& model, const Dataset& split) {
    Reconstruction rec = reconstruct_labels(model, split.X, kDigitClasses);
    Index wrong = 0;
    for (Index i = 0; i < split.n(); ++i)
      if (rec.predicted[static_cast<std::size_t>(i)] != (*split.labels)[static_cast<std::size_t>(i)])
        ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(split.n());
  };

  EvalReport report;
  report.task = Task::Reconstruction;
  report.seed = cfg.seed;
  const std::vector<GridCell> grid = digit_grid(median_pix);

  const auto t0 = std::chrono::steady_clock::now();
  GridSearchResult gs = grid_search(grid, Method::Kst, [&](const GridCell& cell) {
    FittedKstModel model = fit(cell.kernel, cell.hyper, train_aug.X);
    return -confusion_of(model, validation);  // grid_search maximizes
  });
  report.grid_seconds = seconds_since(t0);
  report.grid_trace = std::move(gs.trace);
  report.best_index = gs.best_index;

  const auto t1 = std::chrono::steady_clock::now();
  FittedKstModel model = fit(grid[static_cast<std::size_t>(gs.best_index)].kernel,
                             grid[static_cast<std::size_t>(gs.best_index)].hyper, train_aug.X);
  Reconstruction rec = reconstruct_labels(model, test.X, kDigitClasses);
  report.final_seconds = seconds_since(t1);

  report.labels = *test.labels;
  report.scores.resize(test.n());
  Index wrong = 0;
  for (Index i = 0; i < test.n(); ++i) {
    const int pred = rec.predicted[static_cast<std::size_t>(i)];
    report.scores[i] = rec.log_posteriors(i, pred);
    if (pred != (*test.labels)[static_cast<std::size_t>(i)]) ++wrong;
  }
  report.confusion = static_cast<double>(wrong) / static_cast<double>(test.n());
  return report;
}

void write_report(const std::string& prefix, const EvalReport& report) {
  std::string csv;
  for (Index i = 0; i < report.scores.size(); ++i) {
    csv += format_double(report.scores[i]);
    csv += ',';
    csv += std::to_string(report.labels[static_cast<std::size_t>(i)]);
    csv += '\n';
  }
  atomic_write_text(prefix + "_scores.csv", csv);

  std::string txt;
  switch (report.task) {
    case Task::Novelty: txt += "task=novelty\nauc=" + format_double(report.auc) + "\n"; break;
    case Task::Reconstruction:
      txt += "task=reconstruction\nconfusion=" + format_double(report.confusion) + "\n";
      break;
    case Task::RelativeNovelty: txt += "task=relative_novelty\n"; break;
  }
  txt += "seed=" + std::to_string(report.seed) + "\n";
  txt += "grid_seconds=" + format_double(report.grid_seconds) + "\n";
  txt += "final_seconds=" + format_double(report.final_seconds) + "\n";
  if (report.best_index >= 0 && !report.grid_trace.empty()) {
    txt += "best_cell=" + report.grid_trace[static_cast<std::size_t>(report.best_index)].first +
           "\n";
    txt += "grid_trace:\n";
    for (const auto& [desc, metric] : report.grid_trace)
      txt += "  " + desc + " -> " + format_double(metric) + "\n";
  }
  atomic_write_text(prefix + "_summary.txt", txt);
}

}  // namespace kst
