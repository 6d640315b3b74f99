#pragma once

#include <cstddef>

// Dense double-array primitives used by the hot loops (output distributions,
// reward-row reductions, loss sums). Each kernel has a scalar reference
// implementation and, on x86-64 builds, an AVX2 variant; the public functions
// dispatch through a backend selected once at startup (CPU detection,
// overridable via RLHF_LAB_KERNELS=scalar|avx2 or set_backend).
//
// SIMD reductions reassociate, so backends agree to rounding, not bitwise;
// tests pin the tolerance. exp/log never appear inside kernels for that
// reason — transcendentals run through the same scalar libm calls no matter
// which backend is active.
namespace rlhflab::kernels {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
void set_backend(Backend b);   // throws ContractViolation if unavailable
bool avx2_available();

double sum(const double* x, size_t n);
double dot(const double* x, const double* y, size_t n);
double max_value(const double* x, size_t n);  // n must be > 0
double sum_sq_diff(const double* x, const double* y, size_t n);
double l1_diff(const double* x, const double* y, size_t n);
// sum over i of w[i] * (a[i] - b[i])
double weighted_diff_sum(const double* w, const double* a, const double* b, size_t n);
void axpy(double* y, double alpha, const double* x, size_t n);
void scale_inplace(double* x, double alpha, size_t n);
// dst[i] = alpha * src[i]
void scaled_copy(double* dst, const double* src, double alpha, size_t n);

namespace scalar {
double sum(const double* x, size_t n);
double dot(const double* x, const double* y, size_t n);
double max_value(const double* x, size_t n);
double sum_sq_diff(const double* x, const double* y, size_t n);
double l1_diff(const double* x, const double* y, size_t n);
double weighted_diff_sum(const double* w, const double* a, const double* b, size_t n);
void axpy(double* y, double alpha, const double* x, size_t n);
void scale_inplace(double* x, double alpha, size_t n);
void scaled_copy(double* dst, const double* src, double alpha, size_t n);
}  // namespace scalar

#if defined(RLHFLAB_BUILD_AVX2)
namespace avx2 {
double sum(const double* x, size_t n);
double dot(const double* x, const double* y, size_t n);
double max_value(const double* x, size_t n);
double sum_sq_diff(const double* x, const double* y, size_t n);
double l1_diff(const double* x, const double* y, size_t n);
double weighted_diff_sum(const double* w, const double* a, const double* b, size_t n);
void axpy(double* y, double alpha, const double* x, size_t n);
void scale_inplace(double* x, double alpha, size_t n);
void scaled_copy(double* dst, const double* src, double alpha, size_t n);
}  // namespace avx2
#endif

}  // namespace rlhflab::kernels
