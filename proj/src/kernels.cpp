#include "stimpute/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stimpute::kernels {

namespace {
#ifdef _OPENMP
std::atomic<bool> g_parallel{true};
#else
std::atomic<bool> g_parallel{false};
#endif
} // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel_enabled(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

namespace serial {

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_bt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = acc;
    }
  }
}

void matmul_at(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < k; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      const double api = a[p * k + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void add(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}
void sub(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}
void mul(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}
void scale(const double* a, double s, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * s;
}
void relu(const double* a, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] > 0.0 ? a[i] : 0.0;
}
void axpy(const double* a, double s, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] += s * a[i];
}

} // namespace serial

namespace parallel {

// Each output row is owned by exactly one thread and its inner accumulation
// runs in the same order as the serial kernel, so results are bit-identical.

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m * n * k > 4096)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_bt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m * n * k > 4096)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = acc;
    }
  }
}

void matmul_at(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m * n * k > 4096)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(k); ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      const double api = a[p * k + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void add(const double* a, const double* b, double* c, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 16384)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) c[i] = a[i] + b[i];
}
void sub(const double* a, const double* b, double* c, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 16384)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) c[i] = a[i] - b[i];
}
void mul(const double* a, const double* b, double* c, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 16384)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) c[i] = a[i] * b[i];
}
void scale(const double* a, double s, double* c, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 16384)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) c[i] = a[i] * s;
}
void relu(const double* a, double* c, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 16384)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    c[i] = a[i] > 0.0 ? a[i] : 0.0;
}
void axpy(const double* a, double s, double* c, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 16384)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) c[i] += s * a[i];
}

} // namespace parallel

#define STIMPUTE_DISPATCH(fn, ...)            \
  do {                                        \
    if (parallel_enabled())                   \
      parallel::fn(__VA_ARGS__);              \
    else                                      \
      serial::fn(__VA_ARGS__);                \
  } while (0)

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  STIMPUTE_DISPATCH(matmul, a, b, c, m, k, n);
}
void matmul_bt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  STIMPUTE_DISPATCH(matmul_bt, a, b, c, m, k, n);
}
void matmul_at(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  STIMPUTE_DISPATCH(matmul_at, a, b, c, m, k, n);
}
void add(const double* a, const double* b, double* c, std::size_t n) {
  STIMPUTE_DISPATCH(add, a, b, c, n);
}
void sub(const double* a, const double* b, double* c, std::size_t n) {
  STIMPUTE_DISPATCH(sub, a, b, c, n);
}
void mul(const double* a, const double* b, double* c, std::size_t n) {
  STIMPUTE_DISPATCH(mul, a, b, c, n);
}
void scale(const double* a, double s, double* c, std::size_t n) {
  STIMPUTE_DISPATCH(scale, a, s, c, n);
}
void relu(const double* a, double* c, std::size_t n) {
  STIMPUTE_DISPATCH(relu, a, c, n);
}
void axpy(const double* a, double s, double* c, std::size_t n) {
  STIMPUTE_DISPATCH(axpy, a, s, c, n);
}

#undef STIMPUTE_DISPATCH

} // namespace stimpute::kernels
