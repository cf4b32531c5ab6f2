#pragma once

#include <cmath>
#include <cstdint>

namespace jepa::rng {

// SplitMix64 finalizer. All randomness in the project is counter-based: a draw
// is a pure function of (seed, stream, counters), never of call order. That
// keeps parallel loops and checkpoint resume on the exact same stream.
inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent sources of randomness get their own stream tag.
enum Stream : std::uint64_t {
  kParamInit = 1,
  kLayout,
  kNuisance,
  kExpertNoise,
  kBurnIn,
  kTaskPick,
  kBatchPick,
  kBatchMode,
  kFlowTime,
  kFlowNoise,
  kGenNoise,
  kEvalLayout,
  kEvalNuisance,
  kBaselinePolicy,
  kBootstrap,
  kProbe,
};

inline std::uint64_t key(std::uint64_t seed, std::uint64_t stream, std::uint64_t a = 0,
                         std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t k = mix(seed ^ 0x243f6a8885a308d3ull);
  k = mix(k ^ stream);
  k = mix(k ^ a);
  k = mix(k ^ b);
  return mix(k ^ c);
}

inline std::uint64_t at(std::uint64_t k, std::uint64_t i) {
  return mix(k ^ mix(i + 0x9e3779b97f4a7c15ull));
}

// [0,1)
inline double uniform(std::uint64_t k, std::uint64_t i) {
  return double(at(k, i) >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::uint64_t k, std::uint64_t i, double lo, double hi) {
  return lo + (hi - lo) * uniform(k, i);
}

// n must be small against 2^64; modulo bias is negligible here.
inline std::uint64_t index(std::uint64_t k, std::uint64_t i, std::uint64_t n) {
  return at(k, i) % n;
}

inline float normal(std::uint64_t k, std::uint64_t i) {
  std::uint64_t r = at(k, i);
  double u1 = double((r >> 11) | 1ull) * 0x1.0p-53;  // (0,1), log stays finite
  double u2 = double(at(k, i + 0x8000000000000000ull) >> 11) * 0x1.0p-53;
  return float(std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2));
}

// Hands out one fresh key per parameter in construction order.
struct KeyStream {
  std::uint64_t base;
  std::uint64_t counter = 0;
  KeyStream(std::uint64_t seed, std::uint64_t stream) : base(key(seed, stream)) {}
  std::uint64_t next() { return key(base, 0x6b657973ull, counter++); }
};

}  // namespace jepa::rng
