#pragma once

#include <cstdint>
#include <string_view>

#include "hrlmg/numerics.hpp"

namespace hrlmg {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; only used to turn stream labels into seed offsets.
inline std::uint64_t label_hash(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent generator for (root seed, stream label, index). Components that
// draw from different streams never perturb each other's sequences.
inline Rng stream_rng(std::uint64_t root, std::string_view label, std::uint64_t index = 0) {
  const std::uint64_t s = splitmix64(splitmix64(root ^ label_hash(label)) + index);
  return Rng(s);
}

}  // namespace hrlmg
