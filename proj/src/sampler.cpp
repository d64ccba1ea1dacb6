#include "kst/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kst/errors.hpp"
#include "kst/kernel.hpp"
#include "kst/rng.hpp"

namespace kst {

void HmcConfig::validate() const {
  if (!(step_size > 0) || !std::isfinite(step_size))
    throw input_error("hmc: step_size must be positive and finite");
  if (n_leapfrog < 1) throw input_error("hmc: n_leapfrog must be >= 1");
  if (burn_in < 0) throw input_error("hmc: burn_in must be >= 0");
  if (n_samples < 1) throw input_error("hmc: n_samples must be >= 1");
}

HmcConfig HmcConfig::defaults_for(const KernelSpec& kernel) {
  HmcConfig cfg;
  double min_ls = kernel.length_scales.size() > 0 ? kernel.length_scales.minCoeff() : 1.0;
  cfg.step_size = 0.1 * min_ls;
  cfg.n_leapfrog = 20;
  cfg.burn_in = 200;
  return cfg;
}

namespace {

// d/dx of the 0.5*log det G(x) correction, by central differences. Only
// reached for non-shift-invariant kernels with the correction enabled.
Vector jacobian_term_grad(const KernelSpec& kernel, const VectorRef& x) {
  const Index d = x.size();
  Vector g(d);
  Vector xp = x, xm = x;
  for (Index i = 0; i < d; ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    const double fp = log_jacobian(kernel, xp);
    const double fm = log_jacobian(kernel, xm);
    g[i] = (fp - fm) / (2 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

}  // namespace

Vector grad_log_density(const FittedKstModel& model, const VectorRef& x) {
  const Index d = model.dim() > 0 ? model.dim() : x.size();
  if (x.size() != d) throw input_error("grad_log_density: x has wrong dimension");
  const Index n = model.n();
  const double s0 = model.hyper.sigma0_sq;
  const double nb = static_cast<double>(n) + model.hyper.beta;

  Vector grad;
  double bracket = 0;
  if (n == 0) {
    // L = -exponent * log(gamma + k(x,x)/s0): only the self term varies.
    Vector self_grad = kernel_self_grad(model.kernel, x);
    bracket = model.gamma + kernel_self(model.kernel, x) / s0;
    grad = -(model.exponent / bracket) * (self_grad / s0);
  } else {
    detail::QueryStats qs = detail::query_stats(model, x);
    Vector u = detail::solve_inner(model, qs.b);

    // V(:,i) = grad_x k(x, x_i); sum_v = V * 1.
    Matrix V(d, n);
    for (Index i = 0; i < n; ++i) V.col(i) = kernel_grad_x(model.kernel, x, model.X_train.row(i).transpose());
    Vector sum_v = V.rowwise().sum();

    Vector grad_a = kernel_self_grad(model.kernel, x) - (2.0 / nb) * sum_v;
    double ones_u = u.sum();
    Vector grad_q = grad_a / s0 - 2.0 * (V * u - sum_v * (ones_u / static_cast<double>(n)));

    bracket = model.gamma + qs.a / s0 - qs.b.dot(u);
    if (!(bracket > 0)) throw numerical_error("grad_log_density: non-positive log argument");
    grad = -(model.exponent / bracket) * grad_q;
  }

  if (model.jacobian_by_default()) grad += jacobian_term_grad(model.kernel, x);
  return grad;
}

namespace {

struct Potential {
  const FittedKstModel& model;

  double energy(const VectorRef& x) const { return -log_density(model, x); }
  Vector grad_energy(const VectorRef& x) const { return -grad_log_density(model, x); }
};

// One leapfrog trajectory in place; returns false if the trajectory left the
// region where the density is defined (treated as an automatic reject).
bool leapfrog(const Potential& pot, double eps, int steps, Vector& x, Vector& p) {
  try {
    p -= 0.5 * eps * pot.grad_energy(x);
    for (int s = 0; s < steps; ++s) {
      x += eps * p;
      if (s + 1 < steps) p -= eps * pot.grad_energy(x);
    }
    p -= 0.5 * eps * pot.grad_energy(x);
  } catch (const numerical_error&) {
    return false;
  }
  if (!x.allFinite() || !p.allFinite()) return false;
  return true;
}

}  // namespace

namespace detail {

double leapfrog_energy_error(const FittedKstModel& model, const HmcConfig& cfg, const VectorRef& x,
                             const VectorRef& p) {
  Potential pot{model};
  Vector xc = x, pc = p;
  const double h0 = pot.energy(xc) + 0.5 * pc.squaredNorm();
  if (!leapfrog(pot, cfg.step_size, cfg.n_leapfrog, xc, pc))
    throw numerical_error("leapfrog trajectory diverged");
  const double h1 = pot.energy(xc) + 0.5 * pc.squaredNorm();
  return std::abs(h1 - h0);
}

}  // namespace detail

HmcResult sample_predictive(const FittedKstModel& model, const HmcConfig& cfg,
                            const VectorRef& x_init) {
  cfg.validate();
  const Index d = model.dim() > 0 ? model.dim() : x_init.size();
  if (x_init.size() != d) throw input_error("sample_predictive: x_init has wrong dimension");

  Potential pot{model};
  SplitMix64 rng(cfg.seed);

  Vector x = x_init;
  double e_cur = pot.energy(x);

  HmcResult out;
  out.samples.resize(cfg.n_samples, d);
  long accepted = 0, burn_accepted = 0;
  const long total = static_cast<long>(cfg.burn_in) + cfg.n_samples;

  Vector p(d), x_prop(d), p_prop(d);
  for (long it = 0; it < total; ++it) {
    for (Index i = 0; i < d; ++i) p[i] = rng.normal();
    const double h_cur = e_cur + 0.5 * p.squaredNorm();

    x_prop = x;
    p_prop = p;
    bool ok = leapfrog(pot, cfg.step_size, cfg.n_leapfrog, x_prop, p_prop);
    bool accept = false;
    if (ok) {
      const double e_prop = pot.energy(x_prop);
      const double h_prop = e_prop + 0.5 * p_prop.squaredNorm();
      // Draw the uniform unconditionally so the stream does not depend on
      // the trajectory outcome.
      const double u = rng.uniform();
      accept = std::log(u) < h_cur - h_prop;
      if (accept) {
        x = x_prop;
        e_cur = e_prop;
      }
    } else {
      (void)rng.uniform();
    }

    if (accept) {
      ++accepted;
      if (it < cfg.burn_in) ++burn_accepted;
    }
    if (it >= cfg.burn_in) out.samples.row(it - cfg.burn_in) = x.transpose();
  }

  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(total);
  if (cfg.burn_in > 0) {
    const double burn_rate = static_cast<double>(burn_accepted) / cfg.burn_in;
    if (burn_rate < 0.05) {
      out.low_acceptance = true;
      warn("hmc: burn-in acceptance rate " + std::to_string(burn_rate) +
           " below 0.05; decrease step_size");
    }
  }
  return out;
}

Matrix fantasy_dataset(const KernelSpec& kernel, const Hyperparams& hyper, int n_points, Index dim,
                       const HmcConfig& cfg) {
  kernel.validate();
  hyper.validate();
  cfg.validate();
  if (n_points < 1) throw input_error("fantasy_dataset: n_points must be >= 1");
  if (dim < 1) throw input_error("fantasy_dataset: dim must be >= 1");
  if (!kernel.shift_invariant())
    throw unsupported_error("fantasy_dataset: requires a shift-invariant kernel");

  Matrix X(n_points, dim);
  X.row(0).setZero();

  SplitMix64 master(cfg.seed);
  const double jitter_sd =
      (kernel.length_scales.size() > 0 ? kernel.length_scales.minCoeff() : 1.0) / 10.0;

  for (int m = 1; m < n_points; ++m) {
    SplitMix64 draw_rng = master.split();
    FittedKstModel model = fit(kernel, hyper, X.topRows(m));

    // Start near a uniformly chosen existing point.
    const std::uint64_t pick = draw_rng.below(static_cast<std::uint64_t>(m));
    Vector x0 = X.row(static_cast<Index>(pick)).transpose();
    for (Index i = 0; i < dim; ++i) x0[i] += jitter_sd * draw_rng.normal();

    HmcConfig chain = cfg;
    chain.n_samples = 1;
    chain.seed = draw_rng.next();
    HmcResult res = sample_predictive(model, chain, x0);
    X.row(m) = res.samples.row(res.samples.rows() - 1);
  }
  return X;
}

}  // namespace kst
