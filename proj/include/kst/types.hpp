#pragma once

#include <Eigen/Dense>

namespace kst {

// Data matrices are row-major: one observation per row. This matches the
// on-disk layout of model files and CSV exports, and lets X.row(i) bind to
// vector references without copies.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

using VectorRef = Eigen::Ref<const Vector>;

}  // namespace kst
