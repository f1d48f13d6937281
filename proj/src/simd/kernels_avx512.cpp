#include "kernels_impl.hpp"

#if TRANSFUSOR_HAVE_AVX2_KERNELS

#include <immintrin.h>

#include <algorithm>
#include <vector>

#define TRANSFUSOR_AVX512 __attribute__((target("avx512f,fma")))

namespace transfusor::simd::avx512 {
namespace {

constexpr std::size_t kPanel = 16;  // two zmm
constexpr std::size_t kRows = 8;
constexpr std::size_t kDepth = 256;
constexpr std::size_t kRowBlock = 96;

void pack_b(const double* b, std::size_t n, std::size_t p0, std::size_t kc, double* out) {
  for (std::size_t j0 = 0; j0 < n; j0 += kPanel) {
    const std::size_t width = std::min(kPanel, n - j0);
    for (std::size_t p = 0; p < kc; ++p) {
      const double* src = b + (p0 + p) * n + j0;
      std::size_t j = 0;
      for (; j < width; ++j) out[j] = src[j];
      for (; j < kPanel; ++j) out[j] = 0.0;
      out += kPanel;
    }
  }
}

void pack_a(const double* a, std::size_t k, std::size_t i0, std::size_t mc, std::size_t p0,
            std::size_t kc, double* out) {
  for (std::size_t r0 = 0; r0 < mc; r0 += kRows) {
    const std::size_t rows = std::min(kRows, mc - r0);
    for (std::size_t p = 0; p < kc; ++p) {
      std::size_t r = 0;
      for (; r < rows; ++r) out[r] = a[(i0 + r0 + r) * k + p0 + p];
      for (; r < kRows; ++r) out[r] = 0.0;
      out += kRows;
    }
  }
}

TRANSFUSOR_AVX512 void micro_tile(std::size_t kc, const double* ap, const double* bp, double* c,
                                  std::size_t ldc, std::size_t rows, std::size_t width,
                                  bool accumulate) {
  __m512d acc[kRows][2];
#pragma GCC unroll 8
  for (std::size_t r = 0; r < kRows; ++r) {
    acc[r][0] = _mm512_setzero_pd();
    acc[r][1] = _mm512_setzero_pd();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512d b0 = _mm512_loadu_pd(bp);
    const __m512d b1 = _mm512_loadu_pd(bp + 8);
#pragma GCC unroll 8
    for (std::size_t r = 0; r < kRows; ++r) {
      const __m512d av = _mm512_set1_pd(ap[r]);
      acc[r][0] = _mm512_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(av, b1, acc[r][1]);
    }
    ap += kRows;
    bp += kPanel;
  }
  const __mmask8 m0 = static_cast<__mmask8>(width >= 8 ? 0xff : (1u << width) - 1);
  const __mmask8 m1 = static_cast<__mmask8>(width >= 16 ? 0xff : width <= 8 ? 0 : (1u << (width - 8)) - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    double* crow = c + r * ldc;
    if (accumulate) {
      acc[r][0] = _mm512_add_pd(acc[r][0], _mm512_maskz_loadu_pd(m0, crow));
      acc[r][1] = _mm512_add_pd(acc[r][1], _mm512_maskz_loadu_pd(m1, crow + 8));
    }
    _mm512_mask_storeu_pd(crow, m0, acc[r][0]);
    _mm512_mask_storeu_pd(crow + 8, m1, acc[r][1]);
  }
}

}  // namespace

bool cpu_supported() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx2") &&
         __builtin_cpu_supports("fma");
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    return;
  }
  const std::size_t panels = (n + kPanel - 1) / kPanel;
  thread_local std::vector<double> bpack, apack;
  bpack.resize(std::min(k, kDepth) * panels * kPanel);
  apack.resize(std::min(k, kDepth) * kRowBlock);
  for (std::size_t p0 = 0; p0 < k; p0 += kDepth) {
    const std::size_t kc = std::min(kDepth, k - p0);
    const bool acc = accumulate || p0 > 0;
    pack_b(b, n, p0, kc, bpack.data());
    for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
      const std::size_t mc = std::min(kRowBlock, m - i0);
      pack_a(a, k, i0, mc, p0, kc, apack.data());
      for (std::size_t jp = 0; jp < panels; ++jp) {
        const std::size_t j0 = jp * kPanel;
        const double* bp = bpack.data() + jp * kc * kPanel;
        for (std::size_t r0 = 0; r0 < mc; r0 += kRows)
          micro_tile(kc, apack.data() + r0 * kc, bp, c + (i0 + r0) * n + j0, n,
                     std::min(kRows, mc - r0), std::min(kPanel, n - j0), acc);
      }
    }
  }
}

}  // namespace transfusor::simd::avx512

#endif
