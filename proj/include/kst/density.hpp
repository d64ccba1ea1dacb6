#pragma once

#include "kst/kernel.hpp"
#include "kst/types.hpp"

namespace kst {

// Prior hyperparameters of the feature-space Gaussian model: sigma0_sq scales
// the inverse-Wishart spherical scale matrix, alpha is its
// degrees-of-freedom concentration, beta concentrates the mean prior at the
// origin. All three must be strictly positive; alpha is deliberately not
// required to exceed the feature dimension (the unnormalized predictive stays
// usable below that threshold).
struct Hyperparams {
  double sigma0_sq = 1.0;
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const;
};

// Immutable fitted state of the kernel Student-t density model. All scoring
// reads go through this struct; it is safe to share across threads after fit.
//
//   row_sums[i] = sum_j k(x_i, x_j)         total_sum = sum_ij k(x_i, x_j)
//   chol_M      = lower Cholesky factor of M + jitter_used * I, where
//                 M = sigma0^4 (I + 11^T/beta) + sigma0^2 C and C is the
//                 doubly centered Gram matrix
//   gamma       = (1 + beta + N) / (beta + N)
//   exponent    = (1 + N + alpha) / 2
struct FittedKstModel {
  KernelSpec kernel;
  Hyperparams hyper;
  Matrix X_train;
  Vector row_sums;
  double total_sum = 0.0;
  Vector K_diag;
  Matrix chol_M;
  double gamma = 0.0;
  double exponent = 0.0;
  double jitter_used = 0.0;

  Index n() const { return X_train.rows(); }
  Index dim() const { return X_train.cols(); }
  // Jacobian policy: the correction is constant for shift-invariant kernels
  // and skipped; applied for everything else.
  bool jacobian_by_default() const { return !kernel.shift_invariant(); }
};

// Fits the model: one Gram matrix, centered statistics, Cholesky of the inner
// matrix M with an escalating jitter ladder (0, then 1e-12*tr(M)/N doubling up
// to 1e-4*tr(M)/N). N = 0 is legal and yields the prior predictive. Throws
// numerical_error if the factorization fails at the top of the ladder.
FittedKstModel fit(const KernelSpec& kernel, const Hyperparams& hyper, const Matrix& X);

// Unnormalized predictive log density at x (the normalization constant is
// intractable and irrelevant for ranking tasks). The three-argument form
// controls the Jacobian correction explicitly; for shift-invariant kernels
// the term is constant and always skipped regardless of the flag.
double log_density(const FittedKstModel& model, const VectorRef& x);
double log_density(const FittedKstModel& model, const VectorRef& x, bool apply_jacobian);

// Scores every row of Xq. OpenMP-parallel over queries against the shared
// read-only model; each entry equals the scalar log_density result bitwise.
// The serial variant is the reference loop kept for tests and benchmarks.
Vector log_density_batch(const FittedKstModel& model, const Matrix& Xq);
Vector log_density_batch(const FittedKstModel& model, const Matrix& Xq, bool apply_jacobian);
Vector log_density_batch_serial(const FittedKstModel& model, const Matrix& Xq);

// Correctness oracle: evaluates the same predictive by direct D x D solve in
// explicit feature space (finite feature maps only). Kept deliberately
// independent of the kernelized scoring path.
double log_density_oracle(const KernelSpec& kernel, const Hyperparams& hyper, const Matrix& X,
                          const VectorRef& x);

// Feature-space core of the oracle: rows of Phi are embedded training points,
// phi is the embedded query. Exposed for evaluating the predictive at
// off-manifold feature points.
double log_density_feature_space(const Hyperparams& hyper, const Matrix& Phi, const VectorRef& phi);

struct Grid1d {
  Vector x;
  Vector density;  // trapezoid-normalized over [lo, hi]
};

// Evaluates the (Jacobian-corrected, per model policy) density on a uniform
// 1-D grid and rescales it to integrate to one over the window. d = 1 only.
Grid1d normalize_1d(const FittedKstModel& model, double lo, double hi, int n_points);

namespace detail {

// Query-side centered statistics (Woodbury route):
//   a   = k(x,x) - 2 sum_i k(x,x_i)/(N+beta) + S/(N+beta)^2
//   b_n = k(x,x_n) - sum_i k(x,x_i)/N + (S - N row_sums[n])/(N(N+beta))
struct QueryStats {
  double a = 0.0;
  Vector b;
};
QueryStats query_stats(const FittedKstModel& model, const VectorRef& x);

// Solves (M + jitter I) u = b through the stored Cholesky factor.
Vector solve_inner(const FittedKstModel& model, const Vector& b);

}  // namespace detail

}  // namespace kst
