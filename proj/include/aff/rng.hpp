#pragma once

#include <cstdint>
#include <random>

namespace aff {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic child seed for stream `stream` of a root seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(derive_seed(seed, stream));
}

// Named streams so that each consumer of a replication seed owns its
// randomness.
namespace stream {
inline constexpr std::uint64_t signal = 1;
inline constexpr std::uint64_t observation = 2;
inline constexpr std::uint64_t particle_filter = 3;
inline constexpr std::uint64_t smoother = 4;
}  // namespace stream

}  // namespace aff
