#pragma once
// Internal declarations shared by the kernel translation units.

#include <cstddef>

namespace transfusor::simd {

namespace scalar {
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double max(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(double s, const double* x, double* out, std::size_t n);
void mul_acc(const double* a, const double* b, double* out, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define TRANSFUSOR_HAVE_AVX2_KERNELS 1
namespace avx2 {
bool cpu_supported();
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double max(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(double s, const double* x, double* out, std::size_t n);
void mul_acc(const double* a, const double* b, double* out, std::size_t n);
}  // namespace avx2
// Only the GEMM differs; the AVX-512 table reuses the AVX2 vector kernels.
namespace avx512 {
bool cpu_supported();
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);
}  // namespace avx512
#else
#define TRANSFUSOR_HAVE_AVX2_KERNELS 0
#endif

}  // namespace transfusor::simd
