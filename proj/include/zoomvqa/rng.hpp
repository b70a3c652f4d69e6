#pragma once

#include <cstdint>
#include <string_view>

namespace zoomvqa {

/// splitmix64 finalizer; derives independent stream seeds from (seed, salt).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a, stable across platforms (unlike std::hash).
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Per-purpose stream identifiers so crops, grids and init never share draws.
enum class Stream : std::uint64_t { init = 1, crops = 2, grids = 3, shuffle = 4, views = 5 };

constexpr std::uint64_t stream_seed(std::uint64_t seed, Stream s, std::uint64_t salt = 0) {
  return mix_seed(mix_seed(seed, static_cast<std::uint64_t>(s)), salt);
}

}  // namespace zoomvqa
