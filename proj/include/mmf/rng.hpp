#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <utility>
#include <vector>

namespace mmf {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Hashes an ordered key (seed, stream ids...) to a 64-bit value. Used to
/// derive independent, order-free random streams such as
/// (seed, layer, step) for dropout or (seed, sample, epoch) for augmentation.
std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts);

/// Uniform double in [0, 1) from a 64-bit word (53 mantissa bits).
inline double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Engine seeded from a hashed key.
std::mt19937_64 keyed_engine(std::initializer_list<std::uint64_t> parts);

/// Uniform double in [lo, hi) drawn from the engine with a fixed recipe so
/// results do not depend on the standard library's distribution classes.
double uniform(std::mt19937_64& engine, double lo, double hi);

/// Standard normal via Box-Muller, stateless per call (consumes two words).
double standard_normal(std::mt19937_64& engine);

/// Uniform integer in [0, n) by rejection, n > 0.
std::uint64_t uniform_index(std::mt19937_64& engine, std::uint64_t n);

/// Fisher-Yates with uniform_index, so the permutation is the same on every
/// standard library.
template <typename V>
void seeded_shuffle(std::vector<V>& items, std::mt19937_64& engine) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(engine, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace mmf
