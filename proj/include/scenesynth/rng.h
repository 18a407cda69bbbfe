#pragma once

#include <cstdint>
#include <random>

namespace scenesynth {

// mt19937_64's output sequence is fixed by the standard; the conversions below
// avoid the implementation-defined std distributions so seeded runs reproduce
// across standard libraries.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniformRange(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Uniform integer in [0, n).
inline uint64_t uniformIndex(Rng& rng, uint64_t n) {
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace scenesynth
