#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kst/density.hpp"
#include "kst/errors.hpp"
#include "kst/rng.hpp"
#include "kst/sampler.hpp"
#include "test_util.hpp"

using namespace kst;
using testutil::random_matrix;
using testutil::random_vector;

namespace {

FittedKstModel prior_t_model() {
  // N = 0 with the linear map: a proper 1-D Student-t shaped target.
  KernelSpec lin = KernelSpec::explicit_map(feature_map_from_registry("linear", 1));
  return fit(lin, Hyperparams{1.0, 3.0, 1.0}, Matrix(0, 1));
}

}  // namespace

TEST_CASE("gradient vanishes at the symmetric stationary point") {
  FittedKstModel m = prior_t_model();
  Vector x(1);
  x[0] = 0.0;
  Vector g = grad_log_density(m, x);
  CHECK(g.size() == 1);
  CHECK(g[0] == 0.0);
}

TEST_CASE("gradient matches central finite differences") {
  SplitMix64 rng(31);
  for (int c = 0; c < 20; ++c) {
    Index d = 0;
    KernelSpec spec;
    if (c % 3 == 0) {
      d = 1 + static_cast<Index>(rng.below(3));
      Vector ls = Vector::Constant(d, testutil::log_uniform(rng, 0.5, 2.0));
      spec = KernelSpec::squared_exponential(ls);
    } else {
      spec = testutil::random_feature_kernel(rng, d);
    }
    Hyperparams h{testutil::log_uniform(rng, 0.5, 2.0), testutil::log_uniform(rng, 1.0, 10.0),
                  testutil::log_uniform(rng, 0.5, 2.0)};
    const Index n = 1 + static_cast<Index>(rng.below(10));
    FittedKstModel m = fit(spec, h, random_matrix(rng, n, d));
    Vector x = random_vector(rng, d);

    Vector g = grad_log_density(m, x);
    for (Index i = 0; i < d; ++i) {
      const double hstep = 1e-5 * std::max(1.0, std::abs(x[i]));
      Vector xp = x, xm = x;
      xp[i] += hstep;
      xm[i] -= hstep;
      const double fd = (log_density(m, xp) - log_density(m, xm)) / (2 * hstep);
      CHECK(std::abs(g[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("laplacian models cannot be differentiated") {
  KernelSpec lap = KernelSpec::laplacian(Vector::Ones(1));
  FittedKstModel m = fit(lap, Hyperparams{1.0, 3.0, 1.0}, Matrix::Zero(3, 1));
  Vector x(1);
  x[0] = 0.5;
  CHECK_THROWS_AS(grad_log_density(m, x), unsupported_error);
}

TEST_CASE("gradient points toward the lone training point") {
  Vector ls = Vector::Ones(1);
  KernelSpec se = KernelSpec::squared_exponential(ls);
  Matrix X(1, 1);
  X << 2.0;
  FittedKstModel m = fit(se, Hyperparams{1.0, 3.0, 100.0}, X);
  Vector x(1);
  x[0] = 1.2;  // left of the training point: density should increase rightward
  Vector g = grad_log_density(m, x);
  CHECK(g[0] * (X(0, 0) - x[0]) > 0.0);
}

TEST_CASE("chain mean of the symmetric target is centered") {
  FittedKstModel m = prior_t_model();
  HmcConfig cfg = HmcConfig::defaults_for(m.kernel);
  cfg.n_samples = 10000;
  cfg.seed = 5;
  Vector x0(1);
  x0[0] = 0.3;
  HmcResult res = sample_predictive(m, cfg, x0);
  const double mean = res.samples.col(0).mean();
  const double sd = std::sqrt((res.samples.col(0).array() - mean).square().mean());
  CHECK(std::abs(mean) <= 3.0 * sd / std::sqrt(10000.0));
  // The conservative default step keeps the integrator nearly exact, so the
  // acceptance rate sits close to 1; anything high is healthy here.
  CHECK(res.acceptance_rate >= 0.4);
  CHECK_FALSE(res.low_acceptance);
}

TEST_CASE("histogram and empirical cdf match the quadrature density") {
  FittedKstModel m = prior_t_model();
  HmcConfig cfg = HmcConfig::defaults_for(m.kernel);
  cfg.n_samples = 20000;
  cfg.seed = 9;
  Vector x0(1);
  x0[0] = 0.0;
  HmcResult res = sample_predictive(m, cfg, x0);

  const double lo = -5.0, hi = 5.0;
  Grid1d g = normalize_1d(m, lo, hi, 4096);

  // Histogram L1 against the quadrature density, both renormalized over the
  // window so escaping tail mass cancels out.
  const int bins = 64;
  Eigen::ArrayXd counts = Eigen::ArrayXd::Zero(bins);
  Index inside = 0;
  for (Index i = 0; i < res.samples.rows(); ++i) {
    const double v = res.samples(i, 0);
    if (v < lo || v >= hi) continue;
    ++inside;
    counts[static_cast<int>((v - lo) / (hi - lo) * bins)] += 1.0;
  }
  CHECK(inside > 19000);  // the proper target should rarely leave +-5
  counts /= static_cast<double>(inside);

  double l1 = 0, cell_mass_total = 0;
  Eigen::ArrayXd cell_mass = Eigen::ArrayXd::Zero(bins);
  const Index per_bin = g.x.size() / bins;
  for (int b = 0; b < bins; ++b) {
    double acc = 0;
    for (Index k = b * per_bin; k + 1 <= (b + 1) * per_bin && k + 1 < g.x.size(); ++k)
      acc += 0.5 * (g.density[k] + g.density[k + 1]) * (g.x[k + 1] - g.x[k]);
    cell_mass[b] = acc;
    cell_mass_total += acc;
  }
  cell_mass /= cell_mass_total;
  for (int b = 0; b < bins; ++b) l1 += std::abs(counts[b] - cell_mass[b]);
  CHECK(l1 <= 0.05);

  // Kolmogorov-Smirnov statistic against the trapezoid CDF.
  Vector cdf(g.x.size());
  cdf[0] = 0;
  for (Index i = 1; i < g.x.size(); ++i)
    cdf[i] = cdf[i - 1] + 0.5 * (g.density[i] + g.density[i - 1]) * (g.x[i] - g.x[i - 1]);
  const double total = cdf[cdf.size() - 1];

  std::vector<double> sorted;
  sorted.reserve(static_cast<std::size_t>(res.samples.rows()));
  for (Index i = 0; i < res.samples.rows(); ++i) {
    const double v = res.samples(i, 0);
    if (v >= lo && v <= hi) sorted.push_back(v);
  }
  std::sort(sorted.begin(), sorted.end());
  double ks = 0;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const Index cell = std::min<Index>(
        g.x.size() - 2, static_cast<Index>((sorted[i] - lo) / (hi - lo) * (g.x.size() - 1)));
    const double t = (sorted[i] - g.x[cell]) / (g.x[cell + 1] - g.x[cell]);
    const double model_cdf = (cdf[cell] + t * (cdf[cell + 1] - cdf[cell])) / total;
    const double emp_hi = static_cast<double>(i + 1) / n;
    const double emp_lo = static_cast<double>(i) / n;
    ks = std::max({ks, std::abs(model_cdf - emp_hi), std::abs(model_cdf - emp_lo)});
  }
  CHECK(ks <= 0.02);
}

TEST_CASE("leapfrog error shrinks at least quadratically in the step size") {
  SplitMix64 rng(33);
  KernelSpec parab = KernelSpec::explicit_map(feature_map_from_registry("parabola", 1));
  FittedKstModel m = fit(parab, Hyperparams{1.0, 3.0, 1.0}, random_matrix(rng, 5, 1));

  HmcConfig coarse = HmcConfig::defaults_for(parab);
  HmcConfig fine = coarse;
  fine.step_size = coarse.step_size / 10.0;

  double err_coarse = 0, err_fine = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    Vector x = random_vector(rng, 1);
    Vector p = random_vector(rng, 1);
    err_coarse += detail::leapfrog_energy_error(m, coarse, x, p);
    err_fine += detail::leapfrog_energy_error(m, fine, x, p);
  }
  CHECK(err_coarse / err_fine >= 50.0);
}

TEST_CASE("chains are bitwise reproducible") {
  FittedKstModel m = prior_t_model();
  HmcConfig cfg = HmcConfig::defaults_for(m.kernel);
  cfg.n_samples = 500;
  cfg.seed = 42;
  Vector x0 = Vector::Zero(1);
  HmcResult a = sample_predictive(m, cfg, x0);
  HmcResult b = sample_predictive(m, cfg, x0);
  CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.acceptance_rate == b.acceptance_rate);

  cfg.seed = 43;
  HmcResult c = sample_predictive(m, cfg, x0);
  CHECK((a.samples - c.samples).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("oversized steps trip the acceptance diagnostic") {
  FittedKstModel m = prior_t_model();
  HmcConfig cfg;
  cfg.step_size = 250.0;
  cfg.n_leapfrog = 20;
  cfg.burn_in = 100;
  cfg.n_samples = 10;
  cfg.seed = 3;
  Vector x0 = Vector::Zero(1);
  HmcResult res = sample_predictive(m, cfg, x0);
  CHECK(res.low_acceptance);
  CHECK(res.acceptance_rate < 0.05);
}

TEST_CASE("fantasy dataset contract") {
  KernelSpec se = KernelSpec::squared_exponential(Vector::Ones(1));
  Hyperparams h{0.1, 3.0, 0.01};
  HmcConfig cfg = HmcConfig::defaults_for(se);
  cfg.seed = 7;

  Matrix one = fantasy_dataset(se, h, 1, 1, cfg);
  CHECK(one.rows() == 1);
  CHECK(one(0, 0) == 0.0);

  Matrix a = fantasy_dataset(se, h, 8, 1, cfg);
  Matrix b = fantasy_dataset(se, h, 8, 1, cfg);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.rows() == 8);
  CHECK(a.allFinite());

  KernelSpec poly = KernelSpec::polynomial(2);
  CHECK_THROWS_AS(fantasy_dataset(poly, h, 4, 1, cfg), unsupported_error);
}

TEST_CASE("config validation") {
  HmcConfig cfg;
  cfg.step_size = 0.0;
  CHECK_THROWS_AS(cfg.validate(), input_error);
  cfg.step_size = 0.1;
  cfg.n_leapfrog = 0;
  CHECK_THROWS_AS(cfg.validate(), input_error);
  cfg.n_leapfrog = 10;
  cfg.n_samples = 0;
  CHECK_THROWS_AS(cfg.validate(), input_error);
}
