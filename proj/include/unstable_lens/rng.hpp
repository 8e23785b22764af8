#pragma once

#include <cstdint>
#include <string_view>

namespace ulens {

// Counter-based generator: the k-th draw of a stream is a pure function of
// (seed, stream, k), mixed with the SplitMix64 finalizer.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64-counter";

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller (consumes two draws).
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent child stream; does not advance this generator.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ulens
