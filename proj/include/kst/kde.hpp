#pragma once

#include "kst/types.hpp"

namespace kst {

// Parzen window estimator with an isotropic Gaussian kernel. Densities are
// proper (integrate to 1), so log values are directly comparable across
// bandwidths.
struct KdeModel {
  Matrix X_train;
  double bandwidth = 1.0;

  Index n() const { return X_train.rows(); }
  Index dim() const { return X_train.cols(); }
};

KdeModel kde_fit(const Matrix& X, double bandwidth);

// log (1/n) sum_i N(x | x_i, h^2 I), evaluated with log-sum-exp.
double kde_log_density(const KdeModel& model, const VectorRef& x);

Vector kde_log_density_batch(const KdeModel& model, const Matrix& X_query);
Vector kde_log_density_batch_serial(const KdeModel& model, const Matrix& X_query);

}  // namespace kst
