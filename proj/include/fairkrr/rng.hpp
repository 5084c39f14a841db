#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fairkrr {

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is fully specified by the standard. The mappings from raw engine
// output to usable values (uniform double, bounded int, gaussian, shuffle)
// are spelled out here instead of going through std::uniform_*_distribution
// or std::shuffle, whose results are implementation-defined. Two builds on
// different standard libraries produce identical streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0. Rejection sampling over a power-of-two
  // mask, so no modulo bias.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double gaussian();

  // Fisher-Yates using uniform_int.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_cached_gaussian_ = false;
  double cached_gaussian_ = 0.0;
};

// SplitMix64 finalizer used to derive independent sub-seeds (per repetition,
// per fold) from one master seed. Nested scopes chain calls explicitly.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace fairkrr
