#include "kernels_impl.hpp"

#if TRANSFUSOR_HAVE_AVX2_KERNELS

#include <immintrin.h>

#include <algorithm>
#include <cstring>
#include <limits>
#include <vector>

#define TRANSFUSOR_AVX2 __attribute__((target("avx2,fma")))

namespace transfusor::simd::avx2 {
namespace {

constexpr std::size_t kPanel = 8;   // columns per packed B panel (two ymm)
constexpr std::size_t kRows = 6;    // rows per micro-tile
constexpr std::size_t kDepth = 256; // k-block kept in cache
constexpr std::size_t kRowBlock = 96;

TRANSFUSOR_AVX2 inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// Rows [p0, p0 + kc) of b[k x n] as consecutive kc x 8 panels, zero padded
// past column n.
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

// Block a[i0 .. i0+mc, p0 .. p0+kc) as groups of kRows rows stored
// column-interleaved ([kc][kRows]), zero padded past row m.
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

TRANSFUSOR_AVX2 void micro_tile(std::size_t kc, const double* ap, const double* bp, double* c,
                                std::size_t ldc, std::size_t rows, std::size_t width,
                                bool accumulate) {
  __m256d acc[kRows][2];
#pragma GCC unroll 8
  for (std::size_t r = 0; r < kRows; ++r) {
    acc[r][0] = _mm256_setzero_pd();
    acc[r][1] = _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
#pragma GCC unroll 8
    for (std::size_t r = 0; r < kRows; ++r) {
      const __m256d av = _mm256_broadcast_sd(ap + r);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
    ap += kRows;
    bp += kPanel;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double* crow = c + r * ldc;
    if (width == kPanel) {
      if (accumulate) {
        acc[r][0] = _mm256_add_pd(acc[r][0], _mm256_loadu_pd(crow));
        acc[r][1] = _mm256_add_pd(acc[r][1], _mm256_loadu_pd(crow + 4));
      }
      _mm256_storeu_pd(crow, acc[r][0]);
      _mm256_storeu_pd(crow + 4, acc[r][1]);
    } else {
      alignas(32) double tmp[kPanel];
      _mm256_store_pd(tmp, acc[r][0]);
      _mm256_store_pd(tmp + 4, acc[r][1]);
      for (std::size_t j = 0; j < width; ++j)
        crow[j] = accumulate ? crow[j] + tmp[j] : tmp[j];
    }
  }
}

}  // namespace

bool cpu_supported() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
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
        const std::size_t width = std::min(kPanel, n - j0);
        const double* bp = bpack.data() + jp * kc * kPanel;
        for (std::size_t r0 = 0; r0 < mc; r0 += kRows)
          micro_tile(kc, apack.data() + r0 * kc, bp, c + (i0 + r0) * n + j0, n,
                     std::min(kRows, mc - r0), width, acc);
      }
    }
  }
}

TRANSFUSOR_AVX2 double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4),
                           acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

TRANSFUSOR_AVX2 double sum(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i];
  return s;
}

TRANSFUSOR_AVX2 double max(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  if (n >= 4) {
    __m256d acc = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    alignas(32) double tmp[4];
    _mm256_store_pd(tmp, acc);
    m = std::max(std::max(tmp[0], tmp[1]), std::max(tmp[2], tmp[3]));
  }
  for (; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

TRANSFUSOR_AVX2 void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

TRANSFUSOR_AVX2 void add(const double* a, const double* b, double* out,
                         std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

TRANSFUSOR_AVX2 void mul(const double* a, const double* b, double* out,
                         std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

TRANSFUSOR_AVX2 void scale(double s, const double* x, double* out, std::size_t n) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(sv, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = s * x[i];
}

TRANSFUSOR_AVX2 void mul_acc(const double* a, const double* b, double* out,
                             std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i),
                                              _mm256_loadu_pd(out + i)));
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

}  // namespace transfusor::simd::avx2

#endif  // TRANSFUSOR_HAVE_AVX2_KERNELS
