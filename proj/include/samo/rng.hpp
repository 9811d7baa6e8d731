#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace samo {

using Rng = std::mt19937_64;

/// Seed for a named, index-addressed substream of `root`. The same
/// (root, purpose, indices) always yields the same seed, independent of the
/// order in which streams are requested.
std::uint64_t substream_seed(std::uint64_t root, std::string_view purpose,
                             std::initializer_list<std::uint64_t> indices = {});

inline Rng substream(std::uint64_t root, std::string_view purpose,
                     std::initializer_list<std::uint64_t> indices = {}) {
  return Rng(substream_seed(root, purpose, indices));
}

}  // namespace samo
