#pragma once

// Shared random generators for the test suites. Everything draws through
// SplitMix64 so any failure reproduces bit-for-bit across platforms.

#include <cmath>

#include "kst/density.hpp"
#include "kst/kernel.hpp"
#include "kst/rng.hpp"
#include "kst/types.hpp"

namespace testutil {

using namespace kst;

inline Matrix random_matrix(SplitMix64& rng, Index n, Index d, double scale = 1.0) {
  Matrix X(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) X(i, j) = scale * rng.normal();
  return X;
}

inline Vector random_vector(SplitMix64& rng, Index d, double scale = 1.0) {
  Vector x(d);
  for (Index i = 0; i < d; ++i) x[i] = scale * rng.normal();
  return x;
}

inline double log_uniform(SplitMix64& rng, double lo, double hi) {
  return lo * std::exp(rng.uniform() * std::log(hi / lo));
}

// Hyperparameters spanning the default search-grid ranges.
inline Hyperparams random_hyper(SplitMix64& rng) {
  Hyperparams h;
  h.sigma0_sq = log_uniform(rng, 0.1, 10.0);
  h.alpha = log_uniform(rng, 0.01, 100.0);
  h.beta = log_uniform(rng, 0.01, 100.0);
  return h;
}

// A kernel with a finite feature map (D <= 10), paired with its input
// dimension. Used by the oracle-equivalence and persistence suites.
inline KernelSpec random_feature_kernel(SplitMix64& rng, Index& d_out) {
  switch (rng.below(3)) {
    case 0: {
      d_out = 1 + static_cast<Index>(rng.below(3));
      return KernelSpec::explicit_map(feature_map_from_registry("linear", d_out));
    }
    case 1:
      d_out = 1;
      return KernelSpec::explicit_map(feature_map_from_registry("parabola", 1));
    default: {
      d_out = 1 + static_cast<Index>(rng.below(2));
      int degree = 2 + static_cast<int>(rng.below(2));
      if (d_out == 2) degree = 2;  // keeps D = d + d^2 + ... at or below 10
      return KernelSpec::polynomial(degree);
    }
  }
}

inline KernelSpec random_shift_invariant_kernel(SplitMix64& rng, Index d) {
  Vector ls;
  if (rng.below(2) == 0) {
    ls.resize(1);
    ls[0] = log_uniform(rng, 0.3, 3.0);
  } else {
    ls.resize(d);
    for (Index i = 0; i < d; ++i) ls[i] = log_uniform(rng, 0.3, 3.0);
  }
  return rng.below(2) == 0 ? KernelSpec::squared_exponential(ls) : KernelSpec::laplacian(ls);
}

}  // namespace testutil
