#pragma once

#include <cstdint>
#include <random>

#include "chipledger/bytes.hpp"

namespace chipledger {

// Seeded generator with portable derived distributions. std::mt19937_64's
// output sequence is fixed by the standard; the <random> distributions are
// not, so sampling is done here by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound) by rejection; bound > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  Digest digest() {
    Digest d{};
    for (std::size_t i = 0; i < d.size(); i += 8) {
      auto word = engine_();
      for (std::size_t k = 0; k < 8; ++k) d[i + k] = static_cast<std::uint8_t>(word >> (8 * k));
    }
    return d;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace chipledger
