#pragma once

#include <cstdint>
#include <random>

namespace transfusor {

// Seeded generator with a fixed, platform-independent draw sequence.
//
// Bits come from std::mt19937_64 (fully specified by the standard). Uniform
// doubles take the top 53 bits; normals use the Box-Muller transform and
// cache the second variate. The std::*_distribution adaptors are avoided
// because their algorithms are implementation-defined.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0. Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n);

  double normal();

  // Independent stream derived from this generator's seed and a tag.
  SeededRng fork(std::uint64_t tag) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace transfusor
