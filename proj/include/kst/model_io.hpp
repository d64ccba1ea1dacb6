#pragma once

#include <string>

#include "kst/density.hpp"

namespace kst {

// KSTD1 model file: plain-text key=value header ("format=KSTD1", kernel
// block, hyperparameters in shortest round-trip decimal, n, d, jitter_used)
// terminated by a blank line, then little-endian float64 arrays in order:
// X_train (row-major), row_sums, K_diag, total_sum, chol_M (lower triangle,
// row-major packed). Explicit-map kernels persist by registry name only.
void save_model(const std::string& path, const FittedKstModel& model);
FittedKstModel load_model(const std::string& path);

}  // namespace kst
