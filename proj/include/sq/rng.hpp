#pragma once

#include <cmath>
#include <cstdint>

namespace sq {

// SplitMix64 (Steele/Lea/Flood). One 64-bit word of state; each step does
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
// Small enough to re-implement from this comment in any language, which is
// the point: every random tensor in this toolkit can be regenerated
// elsewhere from the seed alone.
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0,1), built from the top 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller on consecutive uniform pairs. The second
  // value of each pair is cached and handed out on the next call.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;  // log(0) guard
    constexpr double two_pi = 6.283185307179586476925286766559;
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(two_pi * u2);
    has_cached_ = true;
    return r * std::cos(two_pi * u2);
  }

private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Independent stream seeds derived from one base seed (sample index,
// per-layer weight streams, ...).
inline std::uint64_t substream_seed(std::uint64_t base, std::uint64_t stream) {
  SplitMix64 g(base + 0x9E3779B97F4A7C15ULL * (stream + 1));
  return g.next_u64();
}

}  // namespace sq
