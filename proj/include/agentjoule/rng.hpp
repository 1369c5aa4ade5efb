#pragma once

// Platform-stable random streams. The standard distributions are
// implementation-defined, so uniform and normal draws are derived here from
// the fully specified mt19937_64 engine.

#include <cmath>
#include <cstdint>
#include <random>

namespace agentjoule {

class StableRng {
 public:
  explicit StableRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer on [lo, hi], rejection-sampled to avoid modulo bias.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t span = hi - lo;
    if (span == UINT64_MAX) return engine_();
    const std::uint64_t range = span + 1;
    // 2^64 mod range; values below it would bias the low residues.
    const std::uint64_t threshold = (0 - range) % range;
    for (;;) {
      const std::uint64_t v = engine_();
      if (v >= threshold) return lo + v % range;
    }
  }

  // Box-Muller; the spare value is discarded so each call consumes exactly
  // two engine outputs.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace agentjoule
