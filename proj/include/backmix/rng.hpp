#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace backmix {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and a path of integers
/// (epoch, example index, purpose tag...). Order of the path matters.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(base);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(base, path));
}

/// Uniform double in [lo, hi).
inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Stream tags for derive_seed paths.
namespace stream {
inline constexpr std::uint64_t kStandardAugment = 1;
inline constexpr std::uint64_t kBackground = 2;
inline constexpr std::uint64_t kSubset = 3;
inline constexpr std::uint64_t kShuffle = 4;
inline constexpr std::uint64_t kInit = 5;
inline constexpr std::uint64_t kSplit = 6;
inline constexpr std::uint64_t kFrame = 7;
}  // namespace stream

}  // namespace backmix
