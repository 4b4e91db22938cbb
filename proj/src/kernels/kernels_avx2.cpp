#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>

#include "detox/kernels.hpp"

// AVX2+FMA variants. Compiled with -mavx2 -mfma; only reachable after the
// dispatcher has confirmed CPU support.

namespace detox::kernels {
namespace {

constexpr double kExpLo = -708.0;
constexpr double kExpHi = 709.0;
constexpr double kGeluC1 = 0.7978845608028654;
constexpr double kGeluC2 = 0.044715;

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

// exp(x) after Cephes, range-reduced with Cody-Waite splitting. Inputs are
// clamped to [-708, 709] so 2^n stays in the normal range.
inline __m256d exp4(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);

  x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(kExpLo)),
                    _mm256_set1_pd(kExpHi));

  const __m256d n =
      _mm256_floor_pd(_mm256_fmadd_pd(x, log2e, _mm256_set1_pd(0.5)));
  x = _mm256_fnmadd_pd(n, c1, x);
  x = _mm256_fnmadd_pd(n, c2, x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_fmadd_pd(p0, xx, p1);
  px = _mm256_fmadd_pd(px, xx, p2);
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_fmadd_pd(q0, xx, q1);
  qx = _mm256_fmadd_pd(qx, xx, q2);
  qx = _mm256_fmadd_pd(qx, xx, q3);
  __m256d e = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

  // scale by 2^n through the exponent bits
  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  n64 = _mm256_slli_epi64(n64, 52);
  return _mm256_mul_pd(e, _mm256_castsi256_pd(n64));
}

// tanh(x) = sign(x) * (t - 1) / (t + 1) with t = exp(2|x|)
inline __m256d tanh4(__m256d x) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d sign = _mm256_and_pd(x, sign_mask);
  __m256d a = _mm256_andnot_pd(sign_mask, x);
  a = _mm256_min_pd(a, _mm256_set1_pd(20.0));
  const __m256d t = exp4(_mm256_add_pd(a, a));
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d r =
      _mm256_div_pd(_mm256_sub_pd(t, one), _mm256_add_pd(t, one));
  return _mm256_or_pd(r, sign);
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(double a, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) x[i] *= a;
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double r = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

double max_avx2(const double* x, std::size_t n) {
  std::size_t i = 0;
  double m = x[0];
  if (n >= 4) {
    __m256d vm = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) {
      vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
    }
    __m128d lo = _mm256_castpd256_pd128(vm);
    __m128d hi = _mm256_extractf128_pd(vm, 1);
    lo = _mm_max_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    m = _mm_cvtsd_f64(_mm_max_sd(lo, shuf));
  }
  for (; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void vexp_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
  }
  if (i < n) {
    alignas(32) double buf[4] = {0, 0, 0, 0};
    for (std::size_t j = i; j < n; ++j) buf[j - i] = x[j];
    alignas(32) double res[4];
    _mm256_store_pd(res, exp4(_mm256_load_pd(buf)));
    for (std::size_t j = i; j < n; ++j) out[j] = res[j - i];
  }
}

void vtanh_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, tanh4(_mm256_loadu_pd(x + i)));
  }
  if (i < n) {
    alignas(32) double buf[4] = {0, 0, 0, 0};
    for (std::size_t j = i; j < n; ++j) buf[j - i] = x[j];
    alignas(32) double res[4];
    _mm256_store_pd(res, tanh4(_mm256_load_pd(buf)));
    for (std::size_t j = i; j < n; ++j) out[j] = res[j - i];
  }
}

void softmax_avx2(double* x, std::size_t n) {
  const double m = max_avx2(x, n);
  const __m256d vm = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = exp4(_mm256_sub_pd(_mm256_loadu_pd(x + i), vm));
    _mm256_storeu_pd(x + i, e);
    acc = _mm256_add_pd(acc, e);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    x[i] = std::exp(std::clamp(x[i] - m, kExpLo, kExpHi));
    s += x[i];
  }
  scale_avx2(1.0 / s, x, n);
}

inline __m256d gelu4(__m256d v) {
  const __m256d c1 = _mm256_set1_pd(kGeluC1);
  const __m256d c2 = _mm256_set1_pd(kGeluC2);
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d v3 = _mm256_mul_pd(_mm256_mul_pd(v, v), v);
  const __m256d u = _mm256_mul_pd(c1, _mm256_fmadd_pd(c2, v3, v));
  const __m256d t = tanh4(u);
  return _mm256_mul_pd(_mm256_mul_pd(half, v), _mm256_add_pd(one, t));
}

void gelu_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, gelu4(_mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) {
    const double v = x[i];
    const double t = std::tanh(kGeluC1 * (v + kGeluC2 * v * v * v));
    out[i] = 0.5 * v * (1.0 + t);
  }
}

void gelu_backward_avx2(const double* x, const double* dy, double* dx,
                        std::size_t n) {
  const __m256d c1 = _mm256_set1_pd(kGeluC1);
  const __m256d c2 = _mm256_set1_pd(kGeluC2);
  const __m256d c2x3 = _mm256_set1_pd(3.0 * kGeluC2);
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d vv = _mm256_mul_pd(v, v);
    const __m256d u = _mm256_mul_pd(c1, _mm256_fmadd_pd(c2, _mm256_mul_pd(vv, v), v));
    const __m256d t = tanh4(u);
    const __m256d du = _mm256_mul_pd(c1, _mm256_fmadd_pd(c2x3, vv, one));
    const __m256d sech2 = _mm256_fnmadd_pd(t, t, one);
    __m256d g = _mm256_mul_pd(_mm256_mul_pd(half, v), _mm256_mul_pd(sech2, du));
    g = _mm256_fmadd_pd(half, _mm256_add_pd(one, t), g);
    _mm256_storeu_pd(dx + i, _mm256_mul_pd(_mm256_loadu_pd(dy + i), g));
  }
  for (; i < n; ++i) {
    const double v = x[i];
    const double u = kGeluC1 * (v + kGeluC2 * v * v * v);
    const double t = std::tanh(u);
    const double du = kGeluC1 * (1.0 + 3.0 * kGeluC2 * v * v);
    const double g = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
    dx[i] = dy[i] * g;
  }
}

void gemm_nn_avx2(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const __m256d va = _mm256_set1_pd(a[i * k + kk]);
      const double* brow = b + kk * n;
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8) {
        __m256d c0 = _mm256_loadu_pd(crow + j);
        __m256d c1 = _mm256_loadu_pd(crow + j + 4);
        c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), c0);
        c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j + 4), c1);
        _mm256_storeu_pd(crow + j, c0);
        _mm256_storeu_pd(crow + j + 4, c1);
      }
      for (; j + 4 <= n; j += 4) {
        __m256d c0 = _mm256_loadu_pd(crow + j);
        c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), c0);
        _mm256_storeu_pd(crow + j, c0);
      }
      const double av = a[i * k + kk];
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt_avx2(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] += dot_avx2(arow, b + j * k, k);
    }
  }
}

void gemm_tn_avx2(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* arow = a + kk * m;
    const double* brow = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const __m256d va = _mm256_set1_pd(arow[i]);
      double* crow = c + i * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d c0 = _mm256_loadu_pd(crow + j);
        c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), c0);
        _mm256_storeu_pd(crow + j, c0);
      }
      const double av = arow[i];
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

extern const Table kAvx2Table;
const Table kAvx2Table = {
    axpy_avx2,   scale_avx2,         add_avx2,     mul_avx2,
    dot_avx2,    sum_avx2,           max_avx2,     vexp_avx2,
    vtanh_avx2,  softmax_avx2,       gelu_avx2,    gelu_backward_avx2,
    gemm_nn_avx2, gemm_nt_avx2,      gemm_tn_avx2,
};

}  // namespace detox::kernels
