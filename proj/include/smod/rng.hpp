#pragma once

#include <cstdint>
#include <random>

namespace smod {

// Every random quantity in the toolkit is drawn from a std::mt19937_64 whose
// seed is derived from a user seed and a purpose tag. Two streams with the
// same user seed but different purposes are decorrelated by a splitmix64
// finalizer, so e.g. changing how many corruption draws are made never shifts
// the batch sequence.
enum class Stream : std::uint64_t {
  Data = 1,
  Corruption = 2,
  Batch = 3,
  Init = 4,
  Replacement = 5,
  Trial = 6,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t salt = 0) {
  return splitmix64(splitmix64(seed ^ (static_cast<std::uint64_t>(stream) << 56)) + salt);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t salt = 0) {
  return Rng(derive_seed(seed, stream, salt));
}

}  // namespace smod
