#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace xling {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent generator per (seed, tag), so adding a new consumer of
// randomness never shifts the draws of existing ones.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return std::mt19937_64(splitmix64(seed ^ splitmix64(h)));
}

}  // namespace xling
