#pragma once

// Deterministic 64-bit RNG used everywhere randomness is needed, so that runs
// are bit-reproducible across platforms. std::mt19937 would be portable too,
// but std::uniform_*_distribution is implementation-defined, which breaks
// byte-identical outputs between standard libraries; we therefore generate
// uniform variates ourselves from raw 64-bit draws.

#include <cstdint>

namespace marginlab {

// SplitMix64 (Steele, Lea & Flood 2014, public-domain reference sequence).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) from the top 53 bits.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n) via rejection on the top of the range.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = next();
    } while (r >= limit);
    return r % n;
  }

  // Independent child stream k; children of distinct (seed, k) pairs do not
  // collide in practice because the state is re-mixed through two rounds.
  SplitMix64 split(std::uint64_t k) const {
    SplitMix64 child(state_ ^ (0x9E3779B97F4A7C15ULL * (k + 1)));
    child.state_ = child.next();
    return child;
  }

 private:
  std::uint64_t state_;
};

}  // namespace marginlab
