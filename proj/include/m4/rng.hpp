#pragma once

#include <cstdint>
#include <random>

namespace m4 {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Independent stream keyed by (seed, key, salt). Parallel tasks derive their
/// own stream from their index so results do not depend on scheduling.
inline Rng derive_stream(std::uint64_t seed, std::uint64_t key,
                         std::uint64_t salt = 0) {
  std::uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ key);
  h = detail::splitmix64(h ^ (salt * 0x632be59bd9b4e019ULL));
  return Rng(h);
}

}  // namespace m4
