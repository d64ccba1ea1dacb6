#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kst/dataset.hpp"
#include "kst/density.hpp"
#include "kst/types.hpp"

namespace kst {

enum class Task { Novelty, Reconstruction, RelativeNovelty };
enum class Method { Kst, Kde };

// One hyperparameter configuration. Kst cells use kernel + hyper; Kde cells
// use bandwidth only.
struct GridCell {
  KernelSpec kernel;
  Hyperparams hyper;
  double bandwidth = 1.0;
};

std::string describe(const GridCell& cell, Method method);

struct EvalReport {
  Task task = Task::Novelty;
  Vector scores;
  std::vector<int> labels;
  double auc = -1.0;        // novelty only
  double confusion = -1.0;  // reconstruction only
  std::vector<std::pair<std::string, double>> grid_trace;
  int best_index = -1;
  std::uint64_t seed = 0;
  double grid_seconds = 0.0;
  double final_seconds = 0.0;
};

// ROC area by the Mann-Whitney statistic with midrank ties; labels are
// binary, 1 = positive (expected to score high). Needs both classes present.
double auc(const Vector& scores, const std::vector<int>& labels);

// Default search grids. Kst: sigma0_sq in {0.1, 1, 10}, alpha in
// {0.01, 1, 10, 100}, beta in {0.01, 1, 100}, length scale in
// {0.5, 1, 2} x median heuristic (108 cells, kernel-major order). Kde:
// bandwidth in {0.25, 0.5, 1, 2, 4} x median heuristic.
std::vector<GridCell> default_grid(const Matrix& X_train);
std::vector<GridCell> default_bandwidth_grid(const Matrix& X_train);

struct GridSearchResult {
  int best_index = -1;
  double best_metric = 0.0;
  std::vector<std::pair<std::string, double>> trace;  // (cell description, metric)
};

// Evaluates objective on every cell, keeps the argmax (first cell on ties).
// Cells whose objective throws are recorded as failures in the trace; if all
// cells fail the errors are aggregated into one input_error.
GridSearchResult grid_search(const std::vector<GridCell>& grid, Method method,
                             const std::function<double(const GridCell&)>& objective);

// Grid-searched novelty scoring: fit each cell on train, pick the cell with
// the best validation AuC, refit, and report per-item unnormalized log
// densities on test. test/validation labels: 1 = nominal, 0 = novel.
EvalReport novelty_task(const Dataset& train, const Dataset& test, Method method,
                        const std::vector<GridCell>& grid, const Dataset& validation);

struct Reconstruction {
  std::vector<int> predicted;
  Matrix log_posteriors;  // M x n_classes, log-sum-exp normalized per row
};

// Scores [image; one-hot(l)] for every class l under a model fitted on
// augmented vectors, renormalizes per image, predicts the argmax class
// (lowest index on exact ties).
Reconstruction reconstruct_labels(const FittedKstModel& model, const Matrix& images,
                                  int n_classes);

struct RelativeNoveltyResult {
  Vector scores;               // L_target(x) - L_background(x) per target item
  std::vector<char> flagged;   // top ceil(top_fraction * M) by score
};

// Fits one model per dataset with shared kernel/hyperparameters and flags
// the target items with the highest target-to-background log ratio. Ties
// break toward lower item index.
RelativeNoveltyResult relative_novelty(const Dataset& bg, const Dataset& target,
                                       double top_fraction, const KernelSpec& kernel,
                                       const Hyperparams& hyper);

// Digit experiment harnesses. Both take raw 256-dim labelled datasets,
// augment with one-hot labels (d = 266), and use an ARD-SE kernel with the
// median heuristic on pixel dimensions and unit length scale on label
// dimensions. Subset selection and mislabelling are driven by seed and
// recorded in the report.
struct DigitProtocolConfig {
  int n_train = 2000;
  int n_eval = 100;  // novelty: per-class count (correct and mislabelled alike)
  int n_test = 400;  // reconstruction: test image count
  std::uint64_t seed = 0;
};

EvalReport usps_novelty(const Dataset& train_raw, const Dataset& test_raw,
                        const DigitProtocolConfig& cfg);
EvalReport usps_reconstruction(const Dataset& train_raw, const Dataset& test_raw,
                               const DigitProtocolConfig& cfg);

// Report serialization: <prefix>_scores.csv (score,label rows) and
// <prefix>_summary.txt (metric, best cell, seed, timings).
void write_report(const std::string& prefix, const EvalReport& report);

}  // namespace kst
