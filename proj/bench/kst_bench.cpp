// Timing comparison of the OpenMP paths against their serial references.
// Speedups track the core count; on a single-core box both columns match.

#include <omp.h>

#include <cstdio>

#include "kst/density.hpp"
#include "kst/kde.hpp"
#include "kst/kernel.hpp"
#include "kst/rng.hpp"

using namespace kst;

namespace {

Matrix random_matrix(SplitMix64& rng, Index n, Index d) {
  Matrix X(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) X(i, j) = rng.normal();
  return X;
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = omp_get_wtime();
    f();
    best = std::min(best, omp_get_wtime() - t0);
  }
  return best;
}

void row(const char* name, double serial, double parallel) {
  std::printf("%-28s %10.1f ms %10.1f ms %8.2fx\n", name, 1e3 * serial, 1e3 * parallel,
              serial / parallel);
}

}  // namespace

int main() {
  SplitMix64 rng(7);
  const Index n = 1500, d = 8, n_query = 3000;
  KernelSpec se = KernelSpec::squared_exponential(Vector::Constant(1, 1.5));
  Matrix X = random_matrix(rng, n, d);
  Matrix Q = random_matrix(rng, n_query, d);

  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %13s %13s %9s\n", "", "serial", "parallel", "speedup");

  volatile double sink = 0;

  const double g_serial = time_best_of(3, [&] { sink = sink + gram_serial(se, X)(0, 0); });
  const double g_par = time_best_of(3, [&] { sink = sink + gram(se, X)(0, 0); });
  row("gram (n=1500, d=8)", g_serial, g_par);

  FittedKstModel model = fit(se, Hyperparams{1.0, 3.0, 1.0}, X);
  const double b_serial = time_best_of(3, [&] { sink = sink + log_density_batch_serial(model, Q)[0]; });
  const double b_par = time_best_of(3, [&] { sink = sink + log_density_batch(model, Q)[0]; });
  row("score batch (3000 queries)", b_serial, b_par);

  KdeModel kde = kde_fit(X, 0.9);
  const double k_serial =
      time_best_of(3, [&] { sink = sink + kde_log_density_batch_serial(kde, Q)[0]; });
  const double k_par = time_best_of(3, [&] { sink = sink + kde_log_density_batch(kde, Q)[0]; });
  row("kde batch (3000 queries)", k_serial, k_par);

  (void)sink;
  return 0;
}
