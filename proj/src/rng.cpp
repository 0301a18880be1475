#include "mmf/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace mmf {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

std::mt19937_64 keyed_engine(std::initializer_list<std::uint64_t> parts) {
  return std::mt19937_64(hash_key(parts));
}

double uniform(std::mt19937_64& engine, double lo, double hi) {
  return lo + (hi - lo) * unit_interval(engine());
}

double standard_normal(std::mt19937_64& engine) {
  double u1 = unit_interval(engine());
  const double u2 = unit_interval(engine());
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t uniform_index(std::mt19937_64& engine, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine();
  while (x >= limit) x = engine();
  return x % n;
}

}  // namespace mmf
