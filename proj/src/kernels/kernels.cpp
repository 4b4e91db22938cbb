#include "detox/kernels.hpp"

#include <stdexcept>

namespace detox::kernels {

extern const Table kScalarTable;
#ifdef DETOX_HAVE_AVX2
extern const Table kAvx2Table;
#endif

namespace {

bool cpu_has_avx2() {
#if defined(DETOX_HAVE_AVX2) && defined(__GNUC__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend& active_backend() {
  static Backend b = best_supported();
  return b;
}

const Table*& active_table() {
  static const Table* t = &table(best_supported());
  return t;
}

}  // namespace

bool supported(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
      return cpu_has_avx2();
  }
  return false;
}

Backend best_supported() {
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

Backend active() { return active_backend(); }

void select(Backend b) {
  if (!supported(b)) {
    throw std::runtime_error("kernel backend not supported on this CPU: " +
                             name(b));
  }
  active_backend() = b;
  active_table() = &table(b);
}

std::string name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
  }
  return "unknown";
}

const Table& table(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return kScalarTable;
    case Backend::Avx2:
#ifdef DETOX_HAVE_AVX2
      if (cpu_has_avx2()) return kAvx2Table;
#endif
      break;
  }
  throw std::runtime_error("kernel backend not supported on this CPU: " +
                           name(b));
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  active_table()->axpy(a, x, y, n);
}
void scale(double a, double* x, std::size_t n) {
  active_table()->scale(a, x, n);
}
void add(const double* a, const double* b, double* out, std::size_t n) {
  active_table()->add(a, b, out, n);
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
  active_table()->mul(a, b, out, n);
}
double dot(const double* a, const double* b, std::size_t n) {
  return active_table()->dot(a, b, n);
}
double sum(const double* x, std::size_t n) { return active_table()->sum(x, n); }
double max(const double* x, std::size_t n) { return active_table()->max(x, n); }
void vexp(const double* x, double* out, std::size_t n) {
  active_table()->vexp(x, out, n);
}
void vtanh(const double* x, double* out, std::size_t n) {
  active_table()->vtanh(x, out, n);
}
void softmax(double* x, std::size_t n) { active_table()->softmax(x, n); }
void gelu(const double* x, double* out, std::size_t n) {
  active_table()->gelu(x, out, n);
}
void gelu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n) {
  active_table()->gelu_backward(x, dy, dx, n);
}
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  active_table()->gemm_nn(a, b, c, m, k, n);
}
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  active_table()->gemm_nt(a, b, c, m, k, n);
}
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  active_table()->gemm_tn(a, b, c, m, k, n);
}

}  // namespace detox::kernels
