#include <algorithm>
#include <cmath>
#include <cstddef>

#include "detox/kernels.hpp"

namespace detox::kernels {
namespace {

constexpr double kExpLo = -708.0;
constexpr double kExpHi = 709.0;
constexpr double kGeluC1 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC2 = 0.044715;

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double max_scalar(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void vexp_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(std::clamp(x[i], kExpLo, kExpHi));
  }
}

void vtanh_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}

void softmax_scalar(double* x, std::size_t n) {
  const double m = max_scalar(x, n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::exp(std::clamp(x[i] - m, kExpLo, kExpHi));
    s += x[i];
  }
  const double inv = 1.0 / s;
  for (std::size_t i = 0; i < n; ++i) x[i] *= inv;
}

void gelu_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    const double t = std::tanh(kGeluC1 * (v + kGeluC2 * v * v * v));
    out[i] = 0.5 * v * (1.0 + t);
  }
}

void gelu_backward_scalar(const double* x, const double* dy, double* dx,
                          std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    const double u = kGeluC1 * (v + kGeluC2 * v * v * v);
    const double t = std::tanh(u);
    const double du = kGeluC1 * (1.0 + 3.0 * kGeluC2 * v * v);
    const double g = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
    dx[i] = dy[i] * g;
  }
}

void gemm_nn_scalar(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a[i * k + kk];
      const double* brow = b + kk * n;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt_scalar(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      c[i * n + j] += acc;
    }
  }
}

void gemm_tn_scalar(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* arow = a + kk * m;
    const double* brow = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

extern const Table kScalarTable;
const Table kScalarTable = {
    axpy_scalar,   scale_scalar,         add_scalar,     mul_scalar,
    dot_scalar,    sum_scalar,           max_scalar,     vexp_scalar,
    vtanh_scalar,  softmax_scalar,       gelu_scalar,    gelu_backward_scalar,
    gemm_nn_scalar, gemm_nt_scalar,      gemm_tn_scalar,
};

}  // namespace detox::kernels
