#include "fairkrr/rng.hpp"

#include <cmath>

namespace fairkrr {

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  std::uint64_t mask = ~std::uint64_t{0};
  std::uint64_t m = n - 1;
  mask >>= __builtin_clzll(m | 1);
  std::uint64_t r;
  do {
    r = next_u64() & mask;
  } while (r >= n);
  return r;
}

double Rng::gaussian() {
  if (has_cached_gaussian_) {
    has_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  // Box-Muller on two fresh uniforms; u1 is kept away from 0.
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  const double two_pi = 6.283185307179586476925286766559;
  double radius = std::sqrt(-2.0 * std::log(u1));
  double z0 = radius * std::cos(two_pi * u2);
  cached_gaussian_ = radius * std::sin(two_pi * u2);
  has_cached_gaussian_ = true;
  return z0;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace fairkrr
