#include "fhtriage/stable_hash.hpp"

#include <cmath>
#include <numbers>

namespace fhtriage {

std::uint64_t hash_tokens(std::span<const std::string_view> tokens, std::uint64_t seed) noexcept {
  std::uint64_t h = mix64(seed ^ (tokens.size() + 0x2545f4914f6cdd1dULL));
  for (std::string_view t : tokens) h = mix64(h ^ hash_bytes(t, h));
  return h;
}

double standard_normal(Rng& rng) noexcept {
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace fhtriage
