#include "unstable_lens/rng.hpp"

#include <cmath>
#include <numbers>

namespace ulens {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t key = splitmix64(seed_ ^ splitmix64(stream_ + 0x632be59bd9b4e019ULL));
  return splitmix64(key + 0x9e3779b97f4a7c15ULL * (counter_++));
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(seed_, splitmix64(stream_ * 0x2545f4914f6cdd1dULL + stream + 1));
}

}  // namespace ulens
