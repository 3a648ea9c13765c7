#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fuselab {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Child seed for a named component: mix64(parent ^ fnv1a(tag) ^ mix64(index)).
/// Every random stream in the project is derived from the root seed this way,
/// so a stream never depends on how many numbers another stream consumed.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

/// Uniform double in [lo, hi) built from raw engine output (portable across
/// standard libraries, unlike std::uniform_real_distribution).
double uniform(Rng& rng, double lo, double hi);

/// Standard normal via Box-Muller on uniform().
double normal(Rng& rng);

/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

bool bernoulli(Rng& rng, double p);

/// Fisher-Yates using uniform_index().
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(rng, i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace fuselab
