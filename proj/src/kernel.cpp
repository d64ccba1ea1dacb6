#include "kst/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kst/errors.hpp"
#include "kst/rng.hpp"

namespace kst {

namespace {

void check_dims(const KernelSpec& spec, Index d, const char* where) {
  if (spec.length_scales.size() > 1 && spec.length_scales.size() != d)
    throw input_error(std::string(where) + ": ARD length-scale count " +
                      std::to_string(spec.length_scales.size()) + " does not match dimension " +
                      std::to_string(d));
  if (spec.family == KernelFamily::ExplicitMap && spec.map->input_dim > 0 &&
      spec.map->input_dim != d)
    throw input_error(std::string(where) + ": feature map expects dimension " +
                      std::to_string(spec.map->input_dim) + ", got " + std::to_string(d));
}

// r^p for small non-negative integer p, with 0^0 = 1.
double powi(double r, int p) {
  double acc = 1.0;
  for (int i = 0; i < p; ++i) acc *= r;
  return acc;
}

// Evaluator with per-call precomputation hoisted out of the N^2 loops.
struct Baked {
  const KernelSpec& spec;
  Vector inv;  // SE: 1/(2 l_i^2); Laplacian: 1/l_i

  Baked(const KernelSpec& s, Index d) : spec(s) {
    if (s.family == KernelFamily::SquaredExponential) {
      inv.resize(d);
      for (Index i = 0; i < d; ++i) inv[i] = 1.0 / (2.0 * s.ls(i) * s.ls(i));
    } else if (s.family == KernelFamily::Laplacian) {
      inv.resize(d);
      for (Index i = 0; i < d; ++i) inv[i] = 1.0 / s.ls(i);
    }
  }

  double operator()(const VectorRef& x, const VectorRef& y) const {
    switch (spec.family) {
      case KernelFamily::SquaredExponential: {
        double e = 0.0;
        for (Index i = 0; i < x.size(); ++i) {
          const double d = x[i] - y[i];
          e += d * d * inv[i];
        }
        return std::exp(-e);
      }
      case KernelFamily::Laplacian: {
        double e = 0.0;
        for (Index i = 0; i < x.size(); ++i) e += std::abs(x[i] - y[i]) * inv[i];
        return std::exp(-e);
      }
      case KernelFamily::Polynomial: {
        const double r = x.dot(y);
        double acc = 0.0;  // sum_{p=1..degree} r^p by Horner
        for (int p = 0; p < spec.degree; ++p) acc = r * (1.0 + acc);
        return acc;
      }
      case KernelFamily::ExplicitMap:
        return spec.map->phi(x).dot(spec.map->phi(y));
    }
    return 0.0;  // unreachable
  }
};

// Ordered monomial blocks for the polynomial kernel: block p holds all d^p
// products x_{i1}...x_{ip}, so the block dot product equals (x.y)^p exactly.
Vector polynomial_features(const VectorRef& x, int degree) {
  const Index d = x.size();
  Index total = 0, block = 1;
  for (int p = 1; p <= degree; ++p) {
    block *= d;
    total += block;
  }
  Vector out(total);
  Index off = 0;
  Vector prev = x;  // block for p = 1
  out.segment(0, d) = prev;
  off = d;
  for (int p = 2; p <= degree; ++p) {
    Vector cur(prev.size() * d);
    for (Index i = 0; i < prev.size(); ++i)
      for (Index j = 0; j < d; ++j) cur[i * d + j] = prev[i] * x[j];
    out.segment(off, cur.size()) = cur;
    off += cur.size();
    prev.swap(cur);
  }
  return out;
}

}  // namespace

KernelSpec KernelSpec::squared_exponential(Vector length_scales) {
  KernelSpec s;
  s.family = KernelFamily::SquaredExponential;
  s.length_scales = std::move(length_scales);
  s.validate();
  return s;
}

KernelSpec KernelSpec::laplacian(Vector length_scales) {
  KernelSpec s;
  s.family = KernelFamily::Laplacian;
  s.length_scales = std::move(length_scales);
  s.validate();
  return s;
}

KernelSpec KernelSpec::polynomial(int degree) {
  KernelSpec s;
  s.family = KernelFamily::Polynomial;
  s.degree = degree;
  s.validate();
  return s;
}

KernelSpec KernelSpec::explicit_map(FeatureMap m) {
  KernelSpec s;
  s.family = KernelFamily::ExplicitMap;
  s.map = std::move(m);
  s.validate();
  return s;
}

void KernelSpec::validate() const {
  if (length_scales.size() == 0) throw input_error("kernel: empty length-scale vector");
  for (Index i = 0; i < length_scales.size(); ++i)
    if (!(length_scales[i] > 0.0))
      throw input_error("kernel: length scale " + std::to_string(i) + " must be positive");
  if (family == KernelFamily::Polynomial && degree < 1)
    throw input_error("kernel: polynomial degree must be >= 1");
  if (family == KernelFamily::ExplicitMap) {
    if (!map || !map->phi) throw input_error("kernel: explicit map missing feature function");
    if (map->output_dim < 1) throw input_error("kernel: explicit map output dimension must be >= 1");
  }
}

FeatureMap feature_map_from_registry(const std::string& name, Index d) {
  if (name == "linear") {
    FeatureMap m;
    m.name = "linear";
    m.input_dim = d;
    m.output_dim = d;
    m.phi = [](const VectorRef& x) { return Vector(x); };
    m.jacobian = [d](const VectorRef&) { return Matrix(Matrix::Identity(d, d)); };
    return m;
  }
  if (name == "parabola") {
    if (d != 1) throw input_error("feature map 'parabola' is 1-D only");
    FeatureMap m;
    m.name = "parabola";
    m.input_dim = 1;
    m.output_dim = 2;
    m.phi = [](const VectorRef& x) {
      Vector v(2);
      v << x[0], x[0] * x[0];
      return v;
    };
    m.jacobian = [](const VectorRef& x) {
      Matrix j(2, 1);
      j << 1.0, 2.0 * x[0];
      return j;
    };
    return m;
  }
  throw input_error("unknown feature map '" + name + "'");
}

double kernel_eval(const KernelSpec& spec, const VectorRef& x, const VectorRef& y) {
  if (x.size() != y.size())
    throw input_error("kernel_eval: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                      std::to_string(y.size()) + ")");
  check_dims(spec, x.size(), "kernel_eval");
  return Baked(spec, x.size())(x, y);
}

double kernel_self(const KernelSpec& spec, const VectorRef& x) {
  check_dims(spec, x.size(), "kernel_self");
  switch (spec.family) {
    case KernelFamily::SquaredExponential:
    case KernelFamily::Laplacian:
      return 1.0;
    case KernelFamily::Polynomial: {
      const double r = x.dot(x);
      double acc = 0.0;
      for (int p = 0; p < spec.degree; ++p) acc = r * (1.0 + acc);
      return acc;
    }
    case KernelFamily::ExplicitMap: {
      const Vector f = spec.map->phi(x);
      return f.dot(f);
    }
  }
  return 0.0;
}

Vector kernel_grad_x(const KernelSpec& spec, const VectorRef& x, const VectorRef& y) {
  if (x.size() != y.size()) throw input_error("kernel_grad_x: dimension mismatch");
  check_dims(spec, x.size(), "kernel_grad_x");
  const Index d = x.size();
  switch (spec.family) {
    case KernelFamily::SquaredExponential: {
      const double k = Baked(spec, d)(x, y);
      Vector g(d);
      for (Index i = 0; i < d; ++i) {
        const double l = spec.ls(i);
        g[i] = -(x[i] - y[i]) / (l * l) * k;
      }
      return g;
    }
    case KernelFamily::Polynomial: {
      const double r = x.dot(y);
      double c = 0.0;  // sum_p p r^(p-1)
      for (int p = 1; p <= spec.degree; ++p) c += p * powi(r, p - 1);
      return c * y;
    }
    case KernelFamily::ExplicitMap: {
      if (!spec.map->jacobian)
        throw unsupported_error("kernel_grad_x: explicit map has no Jacobian");
      return spec.map->jacobian(x).transpose() * spec.map->phi(y);
    }
    case KernelFamily::Laplacian:
      throw unsupported_error("kernel_grad_x: Laplacian kernel is not differentiable");
  }
  return Vector();
}

Vector kernel_self_grad(const KernelSpec& spec, const VectorRef& x) {
  switch (spec.family) {
    case KernelFamily::SquaredExponential:
    case KernelFamily::Laplacian:
      return Vector::Zero(x.size());  // k(x,x) = 1
    case KernelFamily::Polynomial: {
      const double r = x.dot(x);
      double c = 0.0;
      for (int p = 1; p <= spec.degree; ++p) c += p * powi(r, p - 1);
      return 2.0 * c * x;
    }
    case KernelFamily::ExplicitMap: {
      if (!spec.map->jacobian)
        throw unsupported_error("kernel_self_grad: explicit map has no Jacobian");
      return 2.0 * (spec.map->jacobian(x).transpose() * spec.map->phi(x));
    }
  }
  return Vector();
}

Matrix gram_serial(const KernelSpec& spec, const Matrix& X) {
  const Index n = X.rows();
  if (n < 1) throw input_error("gram: empty point set");
  check_dims(spec, X.cols(), "gram");
  const Baked k(spec, X.cols());
  Matrix K(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) {
      const double v = k(X.row(i).transpose(), X.row(j).transpose());
      K(i, j) = v;
      K(j, i) = v;
    }
  return K;
}

Matrix gram(const KernelSpec& spec, const Matrix& X) {
  const Index n = X.rows();
  if (n < 1) throw input_error("gram: empty point set");
  check_dims(spec, X.cols(), "gram");
  const Baked k(spec, X.cols());
  Matrix K(n, n);
  // Lower triangle, mirrored. Row lengths grow with i, hence dynamic schedule.
#pragma omp parallel for schedule(dynamic, 8)
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) {
      const double v = k(X.row(i).transpose(), X.row(j).transpose());
      K(i, j) = v;
      K(j, i) = v;
    }
  return K;
}

Vector kernel_column(const KernelSpec& spec, const Matrix& X, const VectorRef& x) {
  if (X.rows() > 0 && X.cols() != x.size()) throw input_error("kernel_column: dimension mismatch");
  check_dims(spec, x.size(), "kernel_column");
  const Baked k(spec, x.size());
  Vector out(X.rows());
  for (Index i = 0; i < X.rows(); ++i) out[i] = k(x, X.row(i).transpose());
  return out;
}

Matrix metric_tensor_fd(const KernelSpec& spec, const VectorRef& x) {
  if (spec.family == KernelFamily::Laplacian)
    throw unsupported_error(
        "metric_tensor: Laplacian kernel is not differentiable at the diagonal; "
        "shift-invariant kernels have a constant Jacobian term and never need it");
  const Index d = x.size();
  Vector h(d);
  for (Index i = 0; i < d; ++i) h[i] = 1e-4 * std::max(1.0, std::abs(x[i]));
  Matrix G(d, d);
  Vector xp = x, xm = x, yp = x, ym = x;
  for (Index i = 0; i < d; ++i) {
    xp[i] += h[i];
    xm[i] -= h[i];
    for (Index j = i; j < d; ++j) {
      yp[j] += h[j];
      ym[j] -= h[j];
      const double v = (kernel_eval(spec, xp, yp) - kernel_eval(spec, xp, ym) -
                        kernel_eval(spec, xm, yp) + kernel_eval(spec, xm, ym)) /
                       (4.0 * h[i] * h[j]);
      G(i, j) = v;
      G(j, i) = v;
      yp[j] = x[j];
      ym[j] = x[j];
    }
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return G;
}

Matrix metric_tensor(const KernelSpec& spec, const VectorRef& x) {
  check_dims(spec, x.size(), "metric_tensor");
  const Index d = x.size();
  switch (spec.family) {
    case KernelFamily::SquaredExponential: {
      Matrix G = Matrix::Zero(d, d);
      for (Index i = 0; i < d; ++i) {
        const double l = spec.ls(i);
        G(i, i) = 1.0 / (l * l);
      }
      return G;
    }
    case KernelFamily::Polynomial: {
      // d^2 (x.y)^p / dx_i dy_j at y = x:
      //   p (p-1) r^(p-2) x_i x_j + p r^(p-1) delta_ij,  r = x.x
      const double r = x.dot(x);
      double couter = 0.0, cdiag = 0.0;
      for (int p = 1; p <= spec.degree; ++p) {
        couter += p * (p - 1) * powi(r, p - 2);
        cdiag += p * powi(r, p - 1);
      }
      Matrix G = couter * (x * x.transpose());
      G.diagonal().array() += cdiag;
      return G;
    }
    case KernelFamily::ExplicitMap: {
      if (spec.map->jacobian) {
        const Matrix J = spec.map->jacobian(x);
        return Matrix(J.transpose() * J);
      }
      return metric_tensor_fd(spec, x);
    }
    case KernelFamily::Laplacian:
      throw unsupported_error(
          "metric_tensor: Laplacian kernel is not differentiable at the diagonal; "
          "shift-invariant kernels have a constant Jacobian term and never need it");
  }
  return Matrix();
}

double log_jacobian(const KernelSpec& spec, const VectorRef& x) {
  const Matrix G = metric_tensor(spec, x);
  const Eigen::LLT<Matrix> llt(G);
  if (llt.info() != Eigen::Success)
    throw numerical_error("log_jacobian: metric tensor not positive definite");
  // det G = prod L_ii^2
  double acc = 0.0;
  for (Index i = 0; i < G.rows(); ++i) acc += std::log(llt.matrixLLT()(i, i));
  return acc;
}

double median_heuristic(const Matrix& X) {
  std::vector<Index> dims(X.cols());
  std::iota(dims.begin(), dims.end(), Index{0});
  return median_heuristic(X, dims);
}

double median_heuristic(const Matrix& X, const std::vector<Index>& dims) {
  if (X.rows() < 2) throw input_error("median_heuristic: need at least 2 points");
  if (dims.empty()) throw input_error("median_heuristic: empty dimension subset");
  for (Index d : dims)
    if (d < 0 || d >= X.cols())
      throw input_error("median_heuristic: dimension index out of range");

  // Cap the quadratic cost on large sets; the subsample is seeded so repeated
  // calls agree.
  constexpr Index kMaxPoints = 5000;
  constexpr std::uint64_t kSubsampleSeed = 0x6d656469616eULL;
  Matrix sub;
  const Matrix* pts = &X;
  if (X.rows() > kMaxPoints) {
    SplitMix64 rng(kSubsampleSeed);
    std::vector<Index> idx(X.rows());
    std::iota(idx.begin(), idx.end(), Index{0});
    for (Index i = 0; i < kMaxPoints; ++i) {
      const Index j = i + static_cast<Index>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    sub.resize(kMaxPoints, X.cols());
    for (Index i = 0; i < kMaxPoints; ++i) sub.row(i) = X.row(idx[i]);
    pts = &sub;
  }

  const Index n = pts->rows();
  const std::size_t m = static_cast<std::size_t>(n) * (n - 1) / 2;
  std::vector<double> dist(m);
#pragma omp parallel for schedule(dynamic, 8)
  for (Index i = 0; i < n; ++i) {
    // pairs (i, j) with j > i occupy a contiguous block; position is a pure
    // function of (i, j), so the fill order does not depend on threading
    std::size_t pos = static_cast<std::size_t>(i) * n - static_cast<std::size_t>(i) * (i + 1) / 2;
    for (Index j = i + 1; j < n; ++j, ++pos) {
      double s = 0.0;
      for (Index dd : dims) {
        const double diff = (*pts)(i, dd) - (*pts)(j, dd);
        s += diff * diff;
      }
      dist[pos] = std::sqrt(s);
    }
  }

  if (*std::max_element(dist.begin(), dist.end()) == 0.0)
    throw input_error("median_heuristic: degenerate data, all pairwise distances are zero");

  const std::size_t mid = m / 2;
  std::nth_element(dist.begin(), dist.begin() + mid, dist.end());
  const double upper = dist[mid];
  if (m % 2 == 1) return upper;
  const double lower = *std::max_element(dist.begin(), dist.begin() + mid);
  return 0.5 * (lower + upper);
}

Vector feature_vector(const KernelSpec& spec, const VectorRef& x) {
  check_dims(spec, x.size(), "feature_vector");
  switch (spec.family) {
    case KernelFamily::Polynomial:
      return polynomial_features(x, spec.degree);
    case KernelFamily::ExplicitMap:
      return spec.map->phi(x);
    default:
      throw unsupported_error("feature_vector: kernel has no finite feature map");
  }
}

bool has_explicit_map(const KernelSpec& spec) {
  return spec.family == KernelFamily::Polynomial || spec.family == KernelFamily::ExplicitMap;
}

Index feature_dim(const KernelSpec& spec, Index d) {
  switch (spec.family) {
    case KernelFamily::Polynomial: {
      Index total = 0, block = 1;
      for (int p = 1; p <= spec.degree; ++p) {
        block *= d;
        total += block;
      }
      return total;
    }
    case KernelFamily::ExplicitMap:
      return spec.map->output_dim;
    default:
      throw unsupported_error("feature_dim: kernel has no finite feature map");
  }
}

}  // namespace kst
