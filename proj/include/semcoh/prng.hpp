#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace semcoh {

/// splitmix64 step. Used to expand seeds and to mix stream identifiers.
constexpr std::uint64_t splitmix64_next(std::uint64_t& state) noexcept {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t splitmix64_mix(std::uint64_t value) noexcept {
  return splitmix64_next(value);
}

/// xoshiro256** seeded through splitmix64. Every random draw in the toolkit
/// goes through this generator so outputs reproduce across platforms; the
/// standard library distributions are deliberately not used.
class Xoshiro256ss {
 public:
  explicit constexpr Xoshiro256ss(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  /// Independent stream for (seed, stream_id), e.g. one per class.
  static constexpr Xoshiro256ss stream(std::uint64_t seed,
                                       std::uint64_t stream_id) noexcept {
    return Xoshiro256ss(seed ^ splitmix64_mix(stream_id ^ 0xD1B54A32D192ED03ULL));
  }

  constexpr std::uint64_t next() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform integer in [0, bound) by rejection; bound must be positive.
  constexpr std::uint64_t uniform_index(std::uint64_t bound) noexcept {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform01() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Fair coin: the top bit of the next output.
  constexpr int bernoulli_half() noexcept { return static_cast<int>(next() >> 63); }

  /// Standard normal via Box-Muller (one value per call, the sine branch dropped).
  double normal() noexcept {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4]{};
};

}  // namespace semcoh
