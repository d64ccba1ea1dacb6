#pragma once

#include <cstdint>

#include "kst/density.hpp"
#include "kst/types.hpp"

namespace kst {

// Hamiltonian Monte Carlo tuning. defaults_for picks the conservative
// settings used throughout: step_size = 0.1 * min length scale, 20 leapfrog
// steps, 200 burn-in iterations.
struct HmcConfig {
  double step_size = 0.1;
  int n_leapfrog = 20;
  int burn_in = 200;
  int n_samples = 1;
  std::uint64_t seed = 0;

  void validate() const;
  static HmcConfig defaults_for(const KernelSpec& kernel);
};

// Exact gradient of log_density at x, assembled from analytic kernel
// gradients; the Jacobian-correction term (non-shift-invariant kernels only)
// is differentiated by central finite differences. Laplacian throws
// unsupported_error.
Vector grad_log_density(const FittedKstModel& model, const VectorRef& x);

struct HmcResult {
  Matrix samples;              // n_samples x d, post burn-in chain states
  double acceptance_rate = 0;  // over the whole run
  bool low_acceptance = false; // burn-in acceptance fell below 0.05
};

// Standard HMC with identity mass matrix targeting exp(log_density). One
// sample is recorded per Metropolis step after burn-in. Fully deterministic
// given cfg.seed.
HmcResult sample_predictive(const FittedKstModel& model, const HmcConfig& cfg,
                            const VectorRef& x_init);

// Sequential fantasy data: x_1 = 0, then each x_n is the final state of a
// fresh HMC chain targeting the predictive fitted on x_{1:n-1}. The chain for
// draw n starts from a uniformly chosen previous point perturbed by
// length-scale/10 Gaussian noise. Shift-invariant kernels only (the empty
// model defines an improper prior otherwise). Bitwise reproducible per seed.
Matrix fantasy_dataset(const KernelSpec& kernel, const Hyperparams& hyper, int n_points,
                       Index dim, const HmcConfig& cfg);

namespace detail {

// Energy error |H(end) - H(start)| of a single leapfrog trajectory from
// (x, p). Used by the integrator-accuracy tests.
double leapfrog_energy_error(const FittedKstModel& model, const HmcConfig& cfg, const VectorRef& x,
                             const VectorRef& p);

}  // namespace detail

}  // namespace kst
