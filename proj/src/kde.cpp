#include "kst/kde.hpp"

#include <cmath>
#include <limits>

#include "kst/errors.hpp"

namespace kst {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;
}

KdeModel kde_fit(const Matrix& X, double bandwidth) {
  if (X.rows() < 1) throw input_error("kde_fit: need at least one training point");
  if (!(bandwidth > 0) || !std::isfinite(bandwidth))
    throw input_error("kde_fit: bandwidth must be positive and finite");
  if (!X.allFinite()) throw input_error("kde_fit: training data contains NaN or Inf");
  return KdeModel{X, bandwidth};
}

double kde_log_density(const KdeModel& model, const VectorRef& x) {
  const Index n = model.n();
  const Index d = model.dim();
  if (x.size() != d) throw input_error("kde_log_density: x has wrong dimension");
  const double h2 = model.bandwidth * model.bandwidth;

  // log-sum-exp over the n component log densities.
  double max_e = -std::numeric_limits<double>::infinity();
  Vector e(n);
  for (Index i = 0; i < n; ++i) {
    const double sq = (x - model.X_train.row(i).transpose()).squaredNorm();
    e[i] = -0.5 * sq / h2;
    if (e[i] > max_e) max_e = e[i];
  }
  double acc = 0;
  for (Index i = 0; i < n; ++i) acc += std::exp(e[i] - max_e);
  const double norm =
      -0.5 * static_cast<double>(d) * (kLogTwoPi + 2.0 * std::log(model.bandwidth));
  return max_e + std::log(acc / static_cast<double>(n)) + norm;
}

Vector kde_log_density_batch_serial(const KdeModel& model, const Matrix& X_query) {
  if (X_query.cols() != model.dim()) throw input_error("kde batch: query dimension mismatch");
  Vector out(X_query.rows());
  for (Index q = 0; q < X_query.rows(); ++q)
    out[q] = kde_log_density(model, X_query.row(q).transpose());
  return out;
}

Vector kde_log_density_batch(const KdeModel& model, const Matrix& X_query) {
  if (X_query.cols() != model.dim()) throw input_error("kde batch: query dimension mismatch");
  Vector out(X_query.rows());
#pragma omp parallel for schedule(static)
  for (Index q = 0; q < X_query.rows(); ++q)
    out[q] = kde_log_density(model, X_query.row(q).transpose());
  return out;
}

}  // namespace kst
