// Seed derivation shared by every stochastic stage. All randomness in the
// library is indexed by (seed, stream, counter) so results never depend on
// call order across threads.
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace osteoforge::detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ull));
  return h;
}

using Engine = std::mt19937_64;

inline double uniform(Engine& eng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(eng);
}

/// Uniform in [-1, 1].
inline double symmetric(Engine& eng) { return uniform(eng, -1.0, 1.0); }

}  // namespace osteoforge::detail
