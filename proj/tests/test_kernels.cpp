#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "kst/errors.hpp"
#include "kst/kernel.hpp"
#include "test_util.hpp"

using namespace kst;
using testutil::random_matrix;
using testutil::random_vector;

TEST_CASE("se evaluation") {
  KernelSpec se = KernelSpec::squared_exponential(Vector::Ones(1));
  Vector x(1), y(1);
  x[0] = 0.0;
  y[0] = 0.0;
  CHECK(kernel_eval(se, x, y) == 1.0);
  y[0] = std::sqrt(2.0 * std::log(2.0));
  CHECK(kernel_eval(se, x, y) == doctest::Approx(0.5).epsilon(1e-14));

  // ARD: per-dimension length scales.
  Vector ls(2);
  ls << 2.0, 0.5;
  KernelSpec ard = KernelSpec::squared_exponential(ls);
  Vector a(2), b(2);
  a << 0, 0;
  b << 2, 1;
  CHECK(kernel_eval(ard, a, b) ==
        doctest::Approx(std::exp(-(4.0 / 8.0 + 1.0 / 0.5))).epsilon(1e-14));
}

TEST_CASE("laplacian evaluation") {
  Vector ls(1);
  ls[0] = 2.0;
  KernelSpec lap = KernelSpec::laplacian(ls);
  Vector x(1), y(1);
  x[0] = 0.0;
  y[0] = 3.0;
  CHECK(kernel_eval(lap, x, y) == doctest::Approx(std::exp(-1.5)).epsilon(1e-14));
  CHECK(kernel_eval(lap, x, x) == 1.0);
}

TEST_CASE("polynomial and explicit-map evaluation") {
  KernelSpec poly = KernelSpec::polynomial(2);
  Vector x(1), y(1);
  x[0] = 1.0;
  y[0] = 2.0;
  CHECK(kernel_eval(poly, x, y) == doctest::Approx(6.0).epsilon(1e-14));  // 2 + 4

  KernelSpec parab = KernelSpec::explicit_map(feature_map_from_registry("parabola", 1));
  CHECK(kernel_eval(parab, x, y) == doctest::Approx(6.0).epsilon(1e-14));

  Vector p1 = feature_vector(parab, x);
  CHECK(p1.size() == 2);
  CHECK(p1[0] == 1.0);
  CHECK(p1[1] == 1.0);
  CHECK(feature_dim(parab, 1) == 2);
  CHECK(feature_dim(poly, 2) == 6);  // degree-p block has d^p ordered monomials
}

TEST_CASE("evaluation is exactly symmetric") {
  SplitMix64 rng(11);
  for (int c = 0; c < 50; ++c) {
    const Index d = 1 + static_cast<Index>(rng.below(3));
    Vector x = random_vector(rng, d), y = random_vector(rng, d);
    KernelSpec specs[3] = {testutil::random_shift_invariant_kernel(rng, d),
                           KernelSpec::polynomial(2 + static_cast<int>(rng.below(2))),
                           KernelSpec::explicit_map(feature_map_from_registry("linear", d))};
    for (const KernelSpec& s : specs) CHECK(kernel_eval(s, x, y) == kernel_eval(s, y, x));
  }
}

TEST_CASE("shift invariance of se and laplacian") {
  SplitMix64 rng(12);
  for (int c = 0; c < 50; ++c) {
    const Index d = 1 + static_cast<Index>(rng.below(3));
    KernelSpec spec = testutil::random_shift_invariant_kernel(rng, d);
    Vector x = random_vector(rng, d), y = random_vector(rng, d), z = random_vector(rng, d, 3.0);
    const double k0 = kernel_eval(spec, x, y);
    const double k1 = kernel_eval(spec, x + z, y + z);
    CHECK(std::abs(k1 - k0) <= 1e-12 * std::max(1.0, std::abs(k0)));
  }
}

TEST_CASE("explicit feature vectors reproduce the kernel") {
  SplitMix64 rng(13);
  for (int c = 0; c < 50; ++c) {
    Index d = 0;
    KernelSpec spec = testutil::random_feature_kernel(rng, d);
    Vector x = random_vector(rng, d), y = random_vector(rng, d);
    const double k = kernel_eval(spec, x, y);
    const double dot = feature_vector(spec, x).dot(feature_vector(spec, y));
    CHECK(std::abs(k - dot) <= 1e-12 * std::max(1.0, std::abs(k)));
  }
}

TEST_CASE("gram matrices") {
  KernelSpec lin = KernelSpec::explicit_map(feature_map_from_registry("linear", 1));
  Matrix X(3, 1);
  X << 1, 2, 3;
  Matrix G = gram(lin, X);
  Matrix expect(3, 3);
  expect << 1, 2, 3, 2, 4, 6, 3, 6, 9;
  CHECK((G - expect).cwiseAbs().maxCoeff() == 0.0);

  KernelSpec se = KernelSpec::squared_exponential(Vector::Ones(1));
  Matrix dup(2, 1);
  dup << 0, 0;
  CHECK((gram(se, dup) - Matrix::Ones(2, 2)).cwiseAbs().maxCoeff() == 0.0);

  Matrix one(1, 1);
  one << 0.7;
  CHECK(gram(se, one)(0, 0) == 1.0);
}

TEST_CASE("gram is exactly symmetric and matches the serial loop") {
  SplitMix64 rng(14);
  for (int c = 0; c < 20; ++c) {
    const Index n = 1 + static_cast<Index>(rng.below(20));
    const Index d = 1 + static_cast<Index>(rng.below(3));
    KernelSpec spec = testutil::random_shift_invariant_kernel(rng, d);
    Matrix X = random_matrix(rng, n, d);
    Matrix G = gram(spec, X);
    CHECK((G - G.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((G - gram_serial(spec, X)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("gram matrices are numerically psd") {
  SplitMix64 rng(15);
  for (int c = 0; c < 50; ++c) {
    const Index n = 2 + static_cast<Index>(rng.below(19));
    const Index d = 1 + static_cast<Index>(rng.below(3));
    KernelSpec spec;
    switch (c % 3) {
      case 0: spec = testutil::random_shift_invariant_kernel(rng, d); break;
      case 1: spec = KernelSpec::polynomial(2 + static_cast<int>(rng.below(2))); break;
      default: spec = KernelSpec::explicit_map(feature_map_from_registry("linear", d)); break;
    }
    Matrix X = random_matrix(rng, n, d);
    Matrix G = gram(spec, X);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(G);
    const double floor = -1e-10 * static_cast<double>(n) * G.diagonal().maxCoeff();
    CHECK(eig.eigenvalues().minCoeff() >= floor);
  }
}

TEST_CASE("metric tensor closed forms") {
  KernelSpec parab = KernelSpec::explicit_map(feature_map_from_registry("parabola", 1));
  Vector x1(1);
  x1[0] = 1.0;
  Matrix G = metric_tensor(parab, x1);
  CHECK(G.rows() == 1);
  CHECK(G(0, 0) == doctest::Approx(5.0).epsilon(1e-12));  // 1 + 4x^2

  KernelSpec se = KernelSpec::squared_exponential(Vector::Ones(1));
  Vector x2 = Vector::Constant(2, 0.37);
  CHECK((metric_tensor(se, x2) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);

  Vector ls(2);
  ls << 2.0, 0.5;
  KernelSpec ard = KernelSpec::squared_exponential(ls);
  Matrix Gard = metric_tensor(ard, x2);
  CHECK(Gard(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(Gard(1, 1) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(Gard(0, 1) == 0.0);

  KernelSpec lin = KernelSpec::explicit_map(feature_map_from_registry("linear", 3));
  SplitMix64 rng(1);
  Vector x3 = random_vector(rng, 3);
  CHECK((metric_tensor(lin, x3) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("analytic metric tensor matches finite differences") {
  SplitMix64 rng(16);
  for (int c = 0; c < 20; ++c) {
    const Index d = 1 + static_cast<Index>(rng.below(2));
    KernelSpec spec = (c % 2 == 0)
                          ? KernelSpec::squared_exponential(
                                Vector::Constant(d, testutil::log_uniform(rng, 0.5, 2.0)))
                          : KernelSpec::polynomial(2 + static_cast<int>(rng.below(2)));
    Vector x = random_vector(rng, d);
    Matrix A = metric_tensor(spec, x);
    Matrix F = metric_tensor_fd(spec, x);
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    CHECK((A - F).cwiseAbs().maxCoeff() <= 1e-5 * scale);
  }
}

TEST_CASE("jacobian correction of the parabola map") {
  KernelSpec parab = KernelSpec::explicit_map(feature_map_from_registry("parabola", 1));
  SplitMix64 rng(17);
  for (int c = 0; c < 100; ++c) {
    Vector x(1);
    x[0] = 4.0 * (rng.uniform() - 0.5);
    const double expect = std::sqrt(1.0 + 4.0 * x[0] * x[0]);
    CHECK(std::exp(log_jacobian(parab, x)) == doctest::Approx(expect).epsilon(1e-8));

    Eigen::LLT<Matrix> llt(metric_tensor_fd(parab, x));
    const double fd = std::exp(Matrix(llt.matrixL()).diagonal().array().log().sum());
    CHECK(fd == doctest::Approx(expect).epsilon(1e-5));
  }
}

TEST_CASE("laplacian has no metric tensor") {
  KernelSpec lap = KernelSpec::laplacian(Vector::Ones(1));
  Vector x(1);
  x[0] = 0.3;
  CHECK_THROWS_AS(metric_tensor(lap, x), unsupported_error);
  CHECK_THROWS_AS(kernel_grad_x(lap, x, x), unsupported_error);
}

TEST_CASE("median heuristic") {
  Matrix X(3, 1);
  X << 0, 1, 3;
  CHECK(median_heuristic(X) == 2.0);  // distances {1, 3, 2}

  Matrix P(2, 1);
  P << 0, 1;
  CHECK(median_heuristic(P) == 1.0);

  Matrix Q(2, 2);
  Q << 0, 0, 3, 4;
  CHECK(median_heuristic(Q, {0, 1}) == 5.0);

  // Even pair count: mean of the two central order statistics.
  Matrix E(4, 1);
  E << 0, 1, 2, 4;  // distances {1, 2, 4, 1, 3, 2} -> (2 + 2) / 2
  CHECK(median_heuristic(E) == 2.0);

  // Restricting to a coordinate subset ignores the other columns.
  Matrix R(3, 2);
  R << 0, 100, 1, -50, 3, 7;
  CHECK(median_heuristic(R, {0}) == 2.0);

  Matrix Z = Matrix::Zero(3, 1);
  CHECK_THROWS_AS(median_heuristic(Z), input_error);
  Matrix single(1, 1);
  single << 0.0;
  CHECK_THROWS_AS(median_heuristic(single), input_error);
}

TEST_CASE("validation and dimension errors") {
  CHECK_THROWS_AS(KernelSpec::squared_exponential(Vector::Zero(1)).validate(), input_error);
  CHECK_THROWS_AS(KernelSpec::polynomial(0).validate(), input_error);

  KernelSpec se = KernelSpec::squared_exponential(Vector::Ones(2));
  Vector x2(2), x3(3);
  x2.setZero();
  x3.setZero();
  CHECK_THROWS_AS(kernel_eval(se, x2, x3), input_error);
  CHECK_THROWS_AS(kernel_eval(se, x3, x3), input_error);  // ARD size mismatch

  KernelSpec parab = KernelSpec::explicit_map(feature_map_from_registry("parabola", 1));
  CHECK_THROWS_AS(kernel_eval(parab, x2, x2), input_error);
  CHECK_THROWS_AS(feature_map_from_registry("unknown", 1), input_error);
}
