#pragma once

// Counter-based random streams. A value is a pure function of
// (seed, stream, counter, draw), so streams never perturb each other.

#include <cmath>
#include <cstdint>

namespace fdti {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (b * 0xd1b54a32d192ed03ULL));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class CounterStream {
public:
  CounterStream(std::uint64_t seed, std::uint64_t stream) : key_(mix64(seed, stream)) {}

  /// `k`-th uniform of sub-stream `counter`.
  double uniform(std::uint64_t counter, std::uint64_t k) const {
    return to_unit(mix64(mix64(key_, counter), k));
  }

  /// Poisson count with mean `rate` for sub-stream `counter` (multiplicative inversion).
  std::uint32_t poisson(std::uint64_t counter, double rate) const {
    if (!(rate > 0.0)) return 0;
    const double limit = std::exp(-rate);
    const std::uint64_t sub = mix64(key_, counter);
    double p = 1.0;
    std::uint32_t n = 0;
    for (std::uint64_t k = 0;; ++k) {
      p *= to_unit(mix64(sub, k));
      if (p <= limit) return n;
      ++n;
    }
  }

private:
  std::uint64_t key_;
};

/// Sequential generator for parameter initialisation.
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() { return to_unit(next()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
  std::uint64_t state_;
};

}  // namespace fdti
