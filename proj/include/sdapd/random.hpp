#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace sdapd {

// xoshiro256++ by Blackman and Vigna. Period 2^256 - 1, jump() advances the
// state by 2^128 draws. Satisfies UniformRandomBitGenerator so Boost.Random
// distributions can sit on top of it.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed = 0) { this->seed(seed); }

  // The four state words are consecutive outputs of splitmix64(seed).
  void seed(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(operator()() >> 11) * 0x1.0p-53; }

  void jump();

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

// splitmix64 step: advances state and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

// Substream seed for (base, stream). Defined as the splitmix64 output for the
// state base + (stream + 1) * 0x9E3779B97F4A7C15, so it depends only on the
// two integers and never on scheduling.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace sdapd
