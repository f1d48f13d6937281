// Equivalence of the vectorized kernels against the scalar reference.

#include <cmath>
#include <vector>

#include "doctest.h"
#include "transfusor/rng.hpp"
#include "transfusor/simd/kernels.hpp"

using namespace transfusor;

namespace {

std::vector<double> random_vec(std::size_t n, SeededRng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(1.0, std::abs(a[i]));
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("active table is one of the known variants") {
  const auto& t = simd::active();
  CHECK((t.isa == simd::Isa::kScalar || t.isa == simd::Isa::kAvx2 ||
         t.isa == simd::Isa::kAvx512));
  MESSAGE("active kernels: " << t.name);
}

TEST_CASE("select falls back and restores") {
  simd::select(simd::Isa::kScalar);
  CHECK(simd::active().isa == simd::Isa::kScalar);
  simd::select(simd::Isa::kAvx2);
  if (simd::avx2_kernels()) CHECK(simd::active().isa == simd::Isa::kAvx2);
  else CHECK(simd::active().isa == simd::Isa::kScalar);
  simd::select(simd::Isa::kAvx512);
  if (simd::avx512_kernels()) CHECK(simd::active().isa == simd::Isa::kAvx512);
  else if (simd::avx2_kernels()) CHECK(simd::active().isa == simd::Isa::kAvx2);
  simd::select(simd::Isa::kAvx512);
}

namespace {

void check_gemm_equivalence(const simd::KernelTable& vec, SeededRng& rng) {
  const auto& ref = simd::scalar_kernels();
  auto run = [&](std::size_t m, std::size_t n, std::size_t k) {
    auto a = random_vec(m * k, rng);
    auto b = random_vec(k * n, rng);
    auto c0 = random_vec(m * n, rng);
    for (bool acc : {false, true}) {
      auto c_ref = c0;
      auto c_vec = c0;
      ref.gemm(m, n, k, a.data(), b.data(), c_ref.data(), acc);
      vec.gemm(m, n, k, a.data(), b.data(), c_vec.data(), acc);
      INFO(vec.name << " m=" << m << " n=" << n << " k=" << k << " acc=" << acc);
      CHECK(max_rel_diff(c_ref, c_vec) < 1e-12);
    }
  };
  for (std::size_t m : {1, 3, 4, 5, 9, 17})
    for (std::size_t n : {1, 4, 7, 8, 9, 16, 23})
      for (std::size_t k : {1, 2, 8, 13, 33}) run(m, n, k);
  // Past the cache-block edges in every dimension.
  run(97, 19, 300);
  run(200, 33, 513);
  run(14, 14, 32);
}

}  // namespace

TEST_CASE("avx512 gemm agrees with scalar reference") {
  const simd::KernelTable* vec = simd::avx512_kernels();
  if (!vec) {
    MESSAGE("AVX-512 not available on this host; skipping equivalence");
    return;
  }
  SeededRng rng(12);
  check_gemm_equivalence(*vec, rng);
}

TEST_CASE("scalar gemm matches a naive triple loop") {
  SeededRng rng(3);
  const std::size_t m = 5, n = 7, k = 3;
  auto a = random_vec(m * k, rng);
  auto b = random_vec(k * n, rng);
  std::vector<double> c(m * n, 1.0);
  simd::scalar_kernels().gemm(m, n, k, a.data(), b.data(), c.data(), true);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 1.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("avx2 kernels agree with scalar reference") {
  const simd::KernelTable* vec = simd::avx2_kernels();
  if (!vec) {
    MESSAGE("AVX2 not available on this host; skipping equivalence");
    return;
  }
  const auto& ref = simd::scalar_kernels();
  SeededRng rng(11);

  SUBCASE("gemm over ragged shapes, both accumulate modes") { check_gemm_equivalence(*vec, rng); }

  SUBCASE("reductions and elementwise") {
    for (std::size_t n : {0, 1, 3, 4, 7, 8, 15, 64, 129}) {
      auto a = random_vec(n, rng);
      auto b = random_vec(n, rng);
      CHECK(vec->dot(a.data(), b.data(), n) ==
            doctest::Approx(ref.dot(a.data(), b.data(), n)).epsilon(1e-12));
      CHECK(vec->sum(a.data(), n) ==
            doctest::Approx(ref.sum(a.data(), n)).epsilon(1e-12));
      if (n > 0) CHECK(vec->max(a.data(), n) == ref.max(a.data(), n));

      std::vector<double> o_ref(n), o_vec(n);
      ref.add(a.data(), b.data(), o_ref.data(), n);
      vec->add(a.data(), b.data(), o_vec.data(), n);
      CHECK(o_ref == o_vec);
      ref.mul(a.data(), b.data(), o_ref.data(), n);
      vec->mul(a.data(), b.data(), o_vec.data(), n);
      CHECK(o_ref == o_vec);
      ref.scale(0.37, a.data(), o_ref.data(), n);
      vec->scale(0.37, a.data(), o_vec.data(), n);
      CHECK(o_ref == o_vec);

      auto y_ref = b, y_vec = b;
      ref.axpy(-1.3, a.data(), y_ref.data(), n);
      vec->axpy(-1.3, a.data(), y_vec.data(), n);
      CHECK(max_rel_diff(y_ref, y_vec) < 1e-15);
      y_ref = b;
      y_vec = b;
      ref.mul_acc(a.data(), b.data(), y_ref.data(), n);
      vec->mul_acc(a.data(), b.data(), y_vec.data(), n);
      CHECK(max_rel_diff(y_ref, y_vec) < 1e-15);
    }
  }
}
