#include "kst/density.hpp"

#include <cmath>
#include <string>

#include "kst/errors.hpp"

namespace kst {

void Hyperparams::validate() const {
  if (!(sigma0_sq > 0.0)) throw input_error("hyperparams: sigma0_sq must be positive");
  if (!(alpha > 0.0)) throw input_error("hyperparams: alpha must be positive");
  if (!(beta > 0.0)) throw input_error("hyperparams: beta must be positive");
}

FittedKstModel fit(const KernelSpec& kernel, const Hyperparams& hyper, const Matrix& X) {
  kernel.validate();
  hyper.validate();

  FittedKstModel m;
  m.kernel = kernel;
  m.hyper = hyper;
  m.X_train = X;

  const Index n = X.rows();
  m.gamma = (1.0 + hyper.beta + n) / (hyper.beta + n);
  m.exponent = (1.0 + n + hyper.alpha) / 2.0;

  if (n == 0) {
    m.row_sums.resize(0);
    m.K_diag.resize(0);
    m.chol_M.resize(0, 0);
    return m;
  }

  const Matrix K = gram(kernel, X);
  m.row_sums = K.rowwise().sum();
  m.total_sum = m.row_sums.sum();
  m.K_diag = K.diagonal();

  // C = K - (s 1^T + 1 s^T)/N + S/N^2, the doubly centered Gram matrix.
  const double nd = static_cast<double>(n);
  Matrix M = K;
  M.noalias() -= (m.row_sums * Vector::Ones(n).transpose() +
                  Vector::Ones(n) * m.row_sums.transpose()) /
                 nd;
  M.array() += m.total_sum / (nd * nd);

  const double s0 = hyper.sigma0_sq;
  M *= s0;
  M.array() += s0 * s0 / hyper.beta;
  M.diagonal().array() += s0 * s0;

  M = 0.5 * (M + M.transpose().eval());  // factorization wants exact symmetry

  // Escalating jitter ladder. M is positive definite in exact arithmetic
  // (min eigenvalue >= sigma0^4), but tiny sigma0 against a large centered
  // Gram can lose that in floating point.
  const double unit = M.trace() / nd;
  const double max_jitter = 1e-4 * unit;
  double jitter = 0.0;
  std::string tried;
  while (true) {
    Matrix A = M;
    A.diagonal().array() += jitter;
    const Eigen::LLT<Matrix> llt(A);
    if (llt.info() == Eigen::Success) {
      m.chol_M = llt.matrixL();
      m.jitter_used = jitter;
      return m;
    }
    tried += (tried.empty() ? "" : ", ") + std::to_string(jitter);
    if (jitter == 0.0)
      jitter = 1e-12 * unit;
    else
      jitter *= 2.0;
    if (jitter > max_jitter)
      throw numerical_error("fit: Cholesky of the inner matrix failed at every jitter level [" +
                            tried + "] (max " + std::to_string(max_jitter) + ")");
  }
}

namespace detail {

QueryStats query_stats(const FittedKstModel& model, const VectorRef& x) {
  const Index n = model.n();
  const double beta = model.hyper.beta;
  QueryStats qs;
  const double kxx = kernel_self(model.kernel, x);
  if (n == 0) {
    qs.a = kxx;
    qs.b.resize(0);
    return qs;
  }
  const Vector kq = kernel_column(model.kernel, model.X_train, x);
  const double ksum = kq.sum();
  const double nb = n + beta;
  const double nd = static_cast<double>(n);
  qs.a = kxx - 2.0 * ksum / nb + model.total_sum / (nb * nb);
  qs.b = kq.array() - ksum / nd +
         (model.total_sum - nd * model.row_sums.array()) / (nd * nb);
  return qs;
}

Vector solve_inner(const FittedKstModel& model, const Vector& b) {
  Vector u = b;
  model.chol_M.triangularView<Eigen::Lower>().solveInPlace(u);
  model.chol_M.triangularView<Eigen::Lower>().transpose().solveInPlace(u);
  return u;
}

}  // namespace detail

namespace {

double log_density_core(const FittedKstModel& model, const VectorRef& x) {
  if (x.size() != model.dim() && model.n() > 0)
    throw input_error("log_density: query dimension " + std::to_string(x.size()) +
                      " does not match model dimension " + std::to_string(model.dim()));
  const detail::QueryStats qs = detail::query_stats(model, x);
  double bracket = model.gamma + qs.a / model.hyper.sigma0_sq;
  if (model.n() > 0) bracket -= qs.b.dot(detail::solve_inner(model, qs.b));
  if (!(bracket > 0.0))
    throw numerical_error("log_density: non-positive bracket " + std::to_string(bracket) +
                          "; the inner factorization lost positive definiteness");
  return -model.exponent * std::log(bracket);
}

void maybe_warn_alpha(const FittedKstModel& model) {
  // The feature-space densities are formally improper below this threshold;
  // the restricted predictive is still used as an unnormalized score.
  static thread_local bool warned = false;
  if (!warned && model.hyper.alpha <= static_cast<double>(model.dim()) - 1.0) {
    warn("alpha <= d-1 with Jacobian correction enabled; density is formally improper");
    warned = true;
  }
}

}  // namespace

double log_density(const FittedKstModel& model, const VectorRef& x) {
  return log_density(model, x, model.jacobian_by_default());
}

double log_density(const FittedKstModel& model, const VectorRef& x, bool apply_jacobian) {
  double v = log_density_core(model, x);
  if (apply_jacobian && !model.kernel.shift_invariant()) {
    maybe_warn_alpha(model);
    v += log_jacobian(model.kernel, x);
  }
  return v;
}

Vector log_density_batch(const FittedKstModel& model, const Matrix& Xq) {
  return log_density_batch(model, Xq, model.jacobian_by_default());
}

Vector log_density_batch(const FittedKstModel& model, const Matrix& Xq, bool apply_jacobian) {
  Vector out(Xq.rows());
  std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic, 16)
  for (Index i = 0; i < Xq.rows(); ++i) {
    if (failure) continue;  // an exception must not escape the parallel region
    try {
      out[i] = log_density(model, Xq.row(i).transpose(), apply_jacobian);
    } catch (...) {
#pragma omp critical(kst_batch_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

Vector log_density_batch_serial(const FittedKstModel& model, const Matrix& Xq) {
  Vector out(Xq.rows());
  for (Index i = 0; i < Xq.rows(); ++i) out[i] = log_density(model, Xq.row(i).transpose());
  return out;
}

double log_density_feature_space(const Hyperparams& hyper, const Matrix& Phi,
                                 const VectorRef& phi) {
  hyper.validate();
  const Index n = Phi.rows();
  const Index D = phi.size();
  const double beta = hyper.beta;
  const double gamma = (1.0 + beta + n) / (beta + n);
  const double exponent = (1.0 + n + hyper.alpha) / 2.0;

  Vector phit = phi;
  Matrix A = hyper.sigma0_sq * Matrix::Identity(D, D);
  if (n > 0) {
    if (Phi.cols() != D) throw input_error("log_density_feature_space: dimension mismatch");
    const Vector phibar = Phi.colwise().mean().transpose();
    const Matrix Phit = Phi.rowwise() - phibar.transpose();
    phit -= (static_cast<double>(n) / (n + beta)) * phibar;
    // Phit^T (I - 11^T/(N+beta)) Phit, assembled on the D x D side.
    const Vector colsum = Phit.colwise().sum().transpose();
    A.noalias() += Phit.transpose() * Phit;
    A.noalias() -= (colsum * colsum.transpose()) / (n + beta);
  }
  const Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success)
    throw numerical_error("log_density_feature_space: D x D system not positive definite");
  const double quad = phit.dot(llt.solve(phit));
  return -exponent * std::log(gamma + quad);
}

double log_density_oracle(const KernelSpec& kernel, const Hyperparams& hyper, const Matrix& X,
                          const VectorRef& x) {
  if (!has_explicit_map(kernel))
    throw unsupported_error("log_density_oracle: kernel has no finite feature map");
  const Index D = feature_dim(kernel, x.size());
  Matrix Phi(X.rows(), D);
  for (Index i = 0; i < X.rows(); ++i)
    Phi.row(i) = feature_vector(kernel, X.row(i).transpose()).transpose();
  return log_density_feature_space(hyper, Phi, feature_vector(kernel, x));
}

Grid1d normalize_1d(const FittedKstModel& model, double lo, double hi, int n_points) {
  if (model.n() > 0 && model.dim() != 1) throw input_error("normalize_1d: model is not 1-D");
  if (!(hi > lo)) throw input_error("normalize_1d: hi must exceed lo");
  if (n_points < 64) throw input_error("normalize_1d: need at least 64 grid points");

  Grid1d g;
  g.x.resize(n_points);
  const double step = (hi - lo) / (n_points - 1);
  for (int i = 0; i < n_points; ++i) g.x[i] = lo + step * i;

  Matrix Xq(n_points, 1);
  Xq.col(0) = g.x;
  Vector L = log_density_batch(model, Xq);
  if (!L.allFinite()) throw numerical_error("normalize_1d: non-finite log density on the grid");

  const double m = L.maxCoeff();
  g.density = (L.array() - m).exp();
  double z = 0.0;  // trapezoid rule
  for (int i = 0; i + 1 < n_points; ++i) z += 0.5 * (g.density[i] + g.density[i + 1]) * step;
  if (!(z > 0.0)) throw numerical_error("normalize_1d: zero mass on the grid");
  g.density /= z;
  return g;
}

}  // namespace kst
