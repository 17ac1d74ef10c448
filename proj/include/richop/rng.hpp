#pragma once

#include <cstdint>
#include <random>

namespace richop {

// Seeded generator with platform-independent real draws (the standard
// distributions are implementation-defined, which would break reproducible
// experiment tables across toolchains).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next() { return eng_(); }
  // Standard normal via Box-Muller.
  double normal();

  // Derives an independent stream for item `index` (deterministic).
  static std::uint64_t substream(std::uint64_t seed, std::uint64_t index);

 private:
  std::mt19937_64 eng_;
};

}  // namespace richop
