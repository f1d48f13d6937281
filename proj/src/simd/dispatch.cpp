#include "transfusor/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace transfusor::simd {
namespace {

const KernelTable kScalar{Isa::kScalar,  "scalar",      &scalar::gemm,
                          &scalar::dot,   &scalar::sum,  &scalar::max,
                          &scalar::axpy,  &scalar::add,  &scalar::mul,
                          &scalar::scale, &scalar::mul_acc};

#if TRANSFUSOR_HAVE_AVX2_KERNELS
const KernelTable kAvx2{Isa::kAvx2,   "avx2",      &avx2::gemm, &avx2::dot,
                        &avx2::sum,   &avx2::max,  &avx2::axpy, &avx2::add,
                        &avx2::mul,   &avx2::scale, &avx2::mul_acc};
const KernelTable kAvx512{Isa::kAvx512, "avx512",     &avx512::gemm, &avx2::dot,
                          &avx2::sum,    &avx2::max,   &avx2::axpy,   &avx2::add,
                          &avx2::mul,    &avx2::scale, &avx2::mul_acc};
#endif

const KernelTable* best_up_to(Isa cap) {
  if (cap == Isa::kAvx512)
    if (const KernelTable* t = avx512_kernels()) return t;
  if (cap != Isa::kScalar)
    if (const KernelTable* t = avx2_kernels()) return t;
  return &kScalar;
}

const KernelTable* detect() {
  Isa cap = Isa::kAvx512;
  if (const char* env = std::getenv("TRANSFUSOR_SIMD")) {
    const std::string v(env);
    if (v == "scalar") cap = Isa::kScalar;
    else if (v == "avx2") cap = Isa::kAvx2;
  }
  return best_up_to(cap);
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

const KernelTable* avx2_kernels() {
#if TRANSFUSOR_HAVE_AVX2_KERNELS
  static const bool ok = avx2::cpu_supported();
  return ok ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* avx512_kernels() {
#if TRANSFUSOR_HAVE_AVX2_KERNELS
  static const bool ok = avx2::cpu_supported() && avx512::cpu_supported();
  return ok ? &kAvx512 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void select(Isa isa) {
  current().store(best_up_to(isa), std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kAvx512: return "avx512";
  }
  return "unknown";
}

}  // namespace transfusor::simd
