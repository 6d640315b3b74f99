#include "rlhflab/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "rlhflab/errors.hpp"

namespace rlhflab::kernels {

bool avx2_available() {
#if defined(RLHFLAB_BUILD_AVX2)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Backend detect() {
  if (const char* env = std::getenv("RLHF_LAB_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_available()) return Backend::Avx2;
    return Backend::Scalar;
  }
  return avx2_available() ? Backend::Avx2 : Backend::Scalar;
}

Backend g_backend = detect();

}  // namespace

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_available())
    throw ContractViolation("set_backend: avx2 backend not available on this host");
  g_backend = b;
}

#if defined(RLHFLAB_BUILD_AVX2)
#define RLHFLAB_DISPATCH(call) \
  return g_backend == Backend::Avx2 ? avx2::call : scalar::call
#else
#define RLHFLAB_DISPATCH(call) return scalar::call
#endif

double sum(const double* x, size_t n) { RLHFLAB_DISPATCH(sum(x, n)); }
double dot(const double* x, const double* y, size_t n) { RLHFLAB_DISPATCH(dot(x, y, n)); }
double max_value(const double* x, size_t n) {
  if (n == 0) throw ContractViolation("max_value: empty array");
  RLHFLAB_DISPATCH(max_value(x, n));
}
double sum_sq_diff(const double* x, const double* y, size_t n) {
  RLHFLAB_DISPATCH(sum_sq_diff(x, y, n));
}
double l1_diff(const double* x, const double* y, size_t n) { RLHFLAB_DISPATCH(l1_diff(x, y, n)); }
double weighted_diff_sum(const double* w, const double* a, const double* b, size_t n) {
  RLHFLAB_DISPATCH(weighted_diff_sum(w, a, b, n));
}

#undef RLHFLAB_DISPATCH

#if defined(RLHFLAB_BUILD_AVX2)
#define RLHFLAB_DISPATCH_VOID(call)         \
  if (g_backend == Backend::Avx2)           \
    avx2::call;                             \
  else                                      \
    scalar::call
#else
#define RLHFLAB_DISPATCH_VOID(call) scalar::call
#endif

void axpy(double* y, double alpha, const double* x, size_t n) {
  RLHFLAB_DISPATCH_VOID(axpy(y, alpha, x, n));
}
void scale_inplace(double* x, double alpha, size_t n) {
  RLHFLAB_DISPATCH_VOID(scale_inplace(x, alpha, n));
}
void scaled_copy(double* dst, const double* src, double alpha, size_t n) {
  RLHFLAB_DISPATCH_VOID(scaled_copy(dst, src, alpha, n));
}

#undef RLHFLAB_DISPATCH_VOID

}  // namespace rlhflab::kernels
