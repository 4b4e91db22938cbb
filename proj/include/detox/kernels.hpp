#pragma once

#include <cstddef>
#include <string>

// Double-precision arithmetic kernels behind every dense inner loop in the
// library: encoder matmuls, attention softmax, vocabulary softmax, gradient
// accumulation, and similarity scoring.
//
// Each operation has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active backend is chosen at startup from CPUID and
// can be overridden with select(), e.g. to run the equivalence suite. All
// kernels are pure and safe to call concurrently; select() is not.

namespace detox::kernels {

enum class Backend { Scalar, Avx2 };

bool supported(Backend b);
Backend best_supported();
Backend active();
void select(Backend b);  // throws if the backend is not supported on this CPU
std::string name(Backend b);

// y += a * x
void axpy(double a, const double* x, double* y, std::size_t n);
// x *= a
void scale(double a, double* x, std::size_t n);
// out = a + b
void add(const double* a, const double* b, double* out, std::size_t n);
// out = a * b (elementwise)
void mul(const double* a, const double* b, double* out, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double max(const double* x, std::size_t n);  // n >= 1

// out = exp(x), arguments clamped to [-708, 709]
void vexp(const double* x, double* out, std::size_t n);
void vtanh(const double* x, double* out, std::size_t n);
// numerically stable in-place softmax, n >= 1
void softmax(double* x, std::size_t n);
// tanh-form gaussian error linear unit and its derivative
void gelu(const double* x, double* out, std::size_t n);
// dx = dy * gelu'(x)
void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n);

// Row-major accumulating matrix products. The caller zeroes C when a plain
// product is wanted.
//
// C(m×n) += A(m×k) · B(k×n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);
// C(m×n) += A(m×k) · B(n×k)^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);
// C(m×n) += A(k×m)^T · B(k×n)
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);

// The full dispatch table for one backend. Exposed so the equivalence tests
// can compare two backends directly.
struct Table {
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
  void (*add)(const double*, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*max)(const double*, std::size_t);
  void (*vexp)(const double*, double*, std::size_t);
  void (*vtanh)(const double*, double*, std::size_t);
  void (*softmax)(double*, std::size_t);
  void (*gelu)(const double*, double*, std::size_t);
  void (*gelu_backward)(const double*, const double*, double*, std::size_t);
  void (*gemm_nn)(const double*, const double*, double*, std::size_t,
                  std::size_t, std::size_t);
  void (*gemm_nt)(const double*, const double*, double*, std::size_t,
                  std::size_t, std::size_t);
  void (*gemm_tn)(const double*, const double*, double*, std::size_t,
                  std::size_t, std::size_t);
};

const Table& table(Backend b);  // throws if unsupported

}  // namespace detox::kernels
