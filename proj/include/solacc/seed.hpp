#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace solacc {

/// SplitMix64 finalizer; a bijective scrambler on 64-bit integers.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// FNV-1a hash of a component tag, used to separate random streams.
constexpr std::uint64_t tag_hash(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Seed derivation rule shared by every component: base ⊕ tag ⊕ index, mixed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index) {
  return splitmix64(base ^ tag_hash(tag) ^ splitmix64(index));
}

/// The generator every stochastic routine uses, seeded through SplitMix64 so
/// that nearby integer seeds give unrelated streams.
inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(splitmix64(seed)); }

}  // namespace solacc
