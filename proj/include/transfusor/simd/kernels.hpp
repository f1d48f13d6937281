#pragma once
// Data-parallel double-precision kernels behind the tensor engine.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant; a third table swaps in an AVX-512 GEMM. The best variant
// the CPU supports is chosen once at startup. The environment variable
// TRANSFUSOR_SIMD (scalar | avx2 | avx512) caps the choice.
// All arrays are contiguous and row-major; no alignment is assumed.

#include <cstddef>
#include <string_view>

namespace transfusor::simd {

enum class Isa { kScalar, kAvx2, kAvx512 };

struct KernelTable {
  Isa isa;
  const char* name;

  // c[m x n] = a[m x k] * b[k x n]   (c += ... when accumulate is set)
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               const double* b, double* c, bool accumulate);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*max)(const double* x, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = a + b, out = a * b, out = s * x
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(double s, const double* x, double* out, std::size_t n);
  // out += a * b
  void (*mul_acc)(const double* a, const double* b, double* out, std::size_t n);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_kernels();
const KernelTable* avx512_kernels();

// The table all tensor operations dispatch through.
const KernelTable& active();

// Overrides the runtime choice; used by equivalence tests and benchmarks.
// Falls back to scalar when the requested variant is unavailable.
void select(Isa isa);

std::string_view isa_name(Isa isa);

}  // namespace transfusor::simd
