#pragma once

#include <cstddef>
#include <span>

// Dense numeric kernels backing the tensor layer. Every kernel exists twice:
// a serial reference in kernels::serial and an OpenMP variant in
// kernels::parallel. The parallel variants split work across independent
// output elements only, so both produce bit-identical results; the test
// suite asserts this and tools/bench_kernels compares their throughput.

namespace stimpute::kernels {

// Runtime switch between the serial and parallel backends. Defaults to
// parallel when compiled with OpenMP, serial otherwise.
bool parallel_enabled();
void set_parallel_enabled(bool on);

namespace serial {

// c[m x n] = a[m x k] * b[k x n], row-major, accumulate in index order.
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_bt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

// c[k x n] = a[m x k]^T * b[m x n]
void matmul_at(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

void add(const double* a, const double* b, double* c, std::size_t n);
void sub(const double* a, const double* b, double* c, std::size_t n);
void mul(const double* a, const double* b, double* c, std::size_t n);
void scale(const double* a, double s, double* c, std::size_t n);
void relu(const double* a, double* c, std::size_t n);

// c += a elementwise; used for gradient accumulation.
void axpy(const double* a, double s, double* c, std::size_t n);

} // namespace serial

namespace parallel {

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_bt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_at(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

void add(const double* a, const double* b, double* c, std::size_t n);
void sub(const double* a, const double* b, double* c, std::size_t n);
void mul(const double* a, const double* b, double* c, std::size_t n);
void scale(const double* a, double s, double* c, std::size_t n);
void relu(const double* a, double* c, std::size_t n);
void axpy(const double* a, double s, double* c, std::size_t n);

} // namespace parallel

// Dispatching entry points used by the tensor layer.
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_bt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_at(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void add(const double* a, const double* b, double* c, std::size_t n);
void sub(const double* a, const double* b, double* c, std::size_t n);
void mul(const double* a, const double* b, double* c, std::size_t n);
void scale(const double* a, double s, double* c, std::size_t n);
void relu(const double* a, double* c, std::size_t n);
void axpy(const double* a, double s, double* c, std::size_t n);

} // namespace stimpute::kernels
