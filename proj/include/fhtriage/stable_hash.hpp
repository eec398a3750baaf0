#pragma once

// Seeded hashing and random draws whose output is identical on every
// platform. std::hash and the <random> distributions are implementation
// defined, so anything that ends up in an artifact goes through here.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace fhtriage {

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// FNV-1a over the bytes, then a splitmix finalizer keyed by the seed.
constexpr std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed + 0x9e3779b97f4a7c15ULL);
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h ^ (bytes.size() * 0x9e3779b97f4a7c15ULL));
}

/// Hash of a token tuple. Each element is hashed separately and chained so
/// that ("ab","c") and ("a","bc") never share a preimage.
std::uint64_t hash_tokens(std::span<const std::string_view> tokens, std::uint64_t seed) noexcept;

/// Derive an independent stream seed from a base seed and a salt.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) noexcept {
  return mix64(base ^ mix64(salt + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

/// Uniform integer in [0, bound). Multiply-shift reduction; the bias is
/// below bound / 2^64.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) noexcept {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * bound) >> 64);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) noexcept {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal draw (Box-Muller on uniform_unit).
double standard_normal(Rng& rng) noexcept;

}  // namespace fhtriage
