// Throughput comparison of the serial and OpenMP kernel paths.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "stimpute/kernels.hpp"

using Clock = std::chrono::steady_clock;

namespace {

std::vector<double> random_matrix(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = unif(rng);
  return out;
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e18;
  for (int r = 0; r < reps; ++r) {
    const auto start = Clock::now();
    f();
    const double s = std::chrono::duration<double>(Clock::now() - start).count();
    if (s < best) best = s;
  }
  return best;
}

} // namespace

int main() {
  std::mt19937_64 rng(1);
  std::printf("%8s %12s %12s %8s %10s\n", "size", "serial(s)", "parallel(s)",
              "speedup", "match");

  double checksum = 0.0;
  for (std::size_t n : {64, 128, 256, 512}) {
    const auto a = random_matrix(n * n, rng);
    const auto b = random_matrix(n * n, rng);
    std::vector<double> cs(n * n), cp(n * n);

    const int reps = n <= 128 ? 20 : 5;
    const double serial = time_best_of(reps, [&] {
      stimpute::kernels::serial::matmul(a.data(), b.data(), cs.data(), n, n, n);
    });
    const double parallel = time_best_of(reps, [&] {
      stimpute::kernels::parallel::matmul(a.data(), b.data(), cp.data(), n, n, n);
    });

    bool identical = true;
    for (std::size_t i = 0; i < cs.size(); ++i)
      if (cs[i] != cp[i]) identical = false;
    checksum += cs[0] + cp[n * n - 1];

    std::printf("%8zu %12.6f %12.6f %7.2fx %10s\n", n, serial, parallel,
                serial / parallel, identical ? "bitwise" : "DIFFERS");
    if (!identical) return 1;
  }
  std::printf("checksum %.6f\n", checksum);
  return 0;
}
