#pragma once

#include <cstdint>
#include <vector>

namespace gsfda {

// Deterministic seeded RNG: xoshiro256++ with splitmix64 state expansion.
// Identical seed gives an identical stream everywhere; the integer, index and
// uniform streams are pure integer/IEEE arithmetic and therefore bit-exact
// across platforms. normal() uses Box-Muller and additionally depends on the
// platform's log/cos rounding.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1): top 53 bits scaled by 2^-53.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller; consumes exactly two raw draws.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Uniform index in [0, bound) via 128-bit multiply-shift.
  std::size_t index(std::size_t bound);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = index(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

  // Deterministic stream derivation for independent sub-streams.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

}  // namespace gsfda
