#pragma once

#include <cstdint>
#include <string_view>

namespace nxnflow {

/// Counter-based SplitMix64 stream.
///
/// The full state is (seed, counter), so a generator can be checkpointed and
/// restored exactly. split() derives independent child streams by label, which
/// keeps every subsystem's randomness a pure function of the root seed. Normal
/// variates use Box-Muller on our own uniforms so streams are identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  Rng split(std::string_view label, std::uint64_t index = 0) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

}  // namespace nxnflow
