// Timing comparison of the OpenMP kernel routines against the plain-loop
// reference, plus a bitwise equality check at each size. Usage:
//   bench_kernels [max_n]
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "fairkrr/kernel.hpp"
#include "fairkrr/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

Eigen::MatrixXd random_matrix(int rows, int cols, fairkrr::Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.gaussian();
  return m;
}

template <typename F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    f();
    auto t1 = Clock::now();
    best = std::min(best, seconds(t0, t1));
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const int max_n = argc > 1 ? std::atoi(argv[1]) : 2000;
  const int d = 64;
  fairkrr::Rng rng(7);

  std::printf("%8s %14s %14s %8s %8s\n", "n", "serial_ms", "parallel_ms", "speedup",
              "equal");
  for (int n = 250; n <= max_n; n *= 2) {
    Eigen::MatrixXd a = random_matrix(n, d, rng);
    const auto spec = fairkrr::KernelSpec::gaussian(0.5 / d);

    Eigen::MatrixXd serial_out, parallel_out;
    double ts = best_of(3, [&] { serial_out = fairkrr::serial::gram(a, a, spec); });
    double tp = best_of(3, [&] { parallel_out = fairkrr::gram(a, a, spec); });
    const bool equal = serial_out == parallel_out;

    std::printf("%8d %14.2f %14.2f %8.2f %8s\n", n, ts * 1e3, tp * 1e3, ts / tp,
                equal ? "yes" : "NO");
    if (!equal) return 1;

    Eigen::MatrixXd d2s, d2p;
    ts = best_of(3, [&] { d2s = fairkrr::serial::squared_distances(a, a); });
    tp = best_of(3, [&] { d2p = fairkrr::squared_distances(a, a); });
    std::printf("%8s %14.2f %14.2f %8.2f %8s\n", "(dist)", ts * 1e3, tp * 1e3,
                ts / tp, d2s == d2p ? "yes" : "NO");
    if (d2s != d2p) return 1;
  }
  return 0;
}
