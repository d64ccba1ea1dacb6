#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kst/types.hpp"

namespace kst {

enum class KernelFamily { SquaredExponential, Laplacian, Polynomial, ExplicitMap };

// A finite-dimensional feature map x -> phi(x). Used directly by the
// ExplicitMap kernel family and synthesized internally for Polynomial.
// `jacobian`, when present, returns the D x d matrix d(phi_i)/d(x_j).
struct FeatureMap {
  std::string name;     // registry name; empty for ad hoc maps (not serializable)
  Index input_dim = 0;  // 0 = any dimension
  Index output_dim = 0;
  std::function<Vector(const VectorRef&)> phi;
  std::function<Matrix(const VectorRef&)> jacobian;
};

// Built-in feature maps addressable by name in model files and CLI flags:
//   "linear"    phi(x) = x
//   "parabola"  phi(x) = (x, x^2), 1-D only
FeatureMap feature_map_from_registry(const std::string& name, Index d);

struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  Vector length_scales = Vector::Ones(1);  // size 1 (isotropic) or d (ARD)
  int degree = 2;                          // Polynomial only
  std::optional<FeatureMap> map;           // ExplicitMap only

  bool shift_invariant() const {
    return family == KernelFamily::SquaredExponential || family == KernelFamily::Laplacian;
  }

  // Length scale for coordinate i under the isotropic/ARD convention.
  double ls(Index i) const {
    return length_scales.size() == 1 ? length_scales[0] : length_scales[i];
  }

  // Throws input_error on invalid parameters (non-positive length scale,
  // degree < 1, missing or inconsistent explicit map).
  void validate() const;

  static KernelSpec squared_exponential(Vector length_scales);
  static KernelSpec laplacian(Vector length_scales);
  static KernelSpec polynomial(int degree);
  static KernelSpec explicit_map(FeatureMap m);
};

// k(x, y). Exactly symmetric in its arguments: swapping x and y produces the
// same floating-point result.
double kernel_eval(const KernelSpec& spec, const VectorRef& x, const VectorRef& y);

// k(x, x) without forming a pair.
double kernel_self(const KernelSpec& spec, const VectorRef& x);

// Gradient of k(x, y) with respect to x. Laplacian is not differentiable and
// throws unsupported_error.
Vector kernel_grad_x(const KernelSpec& spec, const VectorRef& x, const VectorRef& y);

// Total derivative d/dx of k(x, x) (both slots moving).
Vector kernel_self_grad(const KernelSpec& spec, const VectorRef& x);

// N x N Gram matrix. Each unordered pair is evaluated once and mirrored, so
// the result is exactly symmetric. OpenMP-parallel over rows; every entry is
// computed independently, making the result bitwise independent of the thread
// count. gram_serial is the plain-loop reference kept for tests and benchmarks.
Matrix gram(const KernelSpec& spec, const Matrix& X);
Matrix gram_serial(const KernelSpec& spec, const Matrix& X);

// Vector [k(x, X.row(0)), ..., k(x, X.row(N-1))].
Vector kernel_column(const KernelSpec& spec, const Matrix& X, const VectorRef& x);

// Kernel-induced metric tensor G(x) with G_ij = <d phi/dx^i, d phi/dx^j>,
// i.e. the mixed second derivative d^2 k(x,y) / dx_i dy_j at y = x. Analytic
// for SquaredExponential and Polynomial, and for ExplicitMap when the map
// carries a Jacobian; otherwise falls back to central finite differences.
// Laplacian throws unsupported_error: its Jacobian correction is constant for
// shift-invariant kernels and never needs to be evaluated.
Matrix metric_tensor(const KernelSpec& spec, const VectorRef& x);

// Finite-difference route (mixed central differences of k, step
// h_i = 1e-4 * max(1, |x_i|)). Exposed as the independent cross-check of the
// analytic formulas.
Matrix metric_tensor_fd(const KernelSpec& spec, const VectorRef& x);

// 0.5 * log det G(x), the log Jacobian correction of the manifold pullback.
double log_jacobian(const KernelSpec& spec, const VectorRef& x);

// Explicit feature vector phi(x) for Polynomial/ExplicitMap kernels; throws
// unsupported_error for families without a finite feature map.
Vector feature_vector(const KernelSpec& spec, const VectorRef& x);
bool has_explicit_map(const KernelSpec& spec);
// Feature-space dimension D for input dimension d.
Index feature_dim(const KernelSpec& spec, Index d);

// Median of the N(N-1)/2 pairwise Euclidean distances restricted to the given
// coordinate subset; for an even pair count, the mean of the two central order
// statistics. Point sets larger than 5000 are subsampled to 5000 with a fixed
// seed to cap the quadratic cost. Throws input_error if N < 2 or dims is
// empty, and a degenerate-data input_error if every pairwise distance is zero.
double median_heuristic(const Matrix& X, const std::vector<Index>& dims);
double median_heuristic(const Matrix& X);  // all coordinates

}  // namespace kst
