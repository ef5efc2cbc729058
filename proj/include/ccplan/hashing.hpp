#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ccplan {

// FNV-1a 64-bit, used for artifact content hashes and provenance ids.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xCBF29CE484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h);

}  // namespace ccplan
