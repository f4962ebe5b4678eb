#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace pathkl {

// Philox4x32-10 (Salmon et al., SC'11). Counter-based: the output block is a
// pure function of (key, counter), so independent substreams are obtained by
// fixing part of the counter to a stream id. Results are bit-exact on every
// platform with IEEE doubles and a correctly rounded libm log/sin/cos.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  static Block generate(std::uint64_t key, Block counter) {
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int round = 0; round < 10; ++round) {
      counter = single_round(counter, k0, k1);
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    return counter;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static Block single_round(const Block& c, std::uint32_t k0, std::uint32_t k1) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k0, static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k1, static_cast<std::uint32_t>(p0)};
  }
};

// SplitMix64 finalizer, used to derive child seeds from (seed, tag).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed ^ mix64(tag));
}

// One substream: key = seed, counter = (stream lo, stream hi, draw lo, draw hi).
// Each block yields two 53-bit uniforms; normals come from Box-Muller in pairs.
class Substream {
 public:
  Substream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  // Uniform in the open interval (0, 1).
  double uniform() {
    if (cached_uniform_) {
      cached_uniform_ = false;
      return spare_uniform_;
    }
    const Philox4x32::Block out = Philox4x32::generate(
        seed_, {static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32),
                static_cast<std::uint32_t>(draw_), static_cast<std::uint32_t>(draw_ >> 32)});
    ++draw_;
    spare_uniform_ = to_unit(out[2], out[3]);
    cached_uniform_ = true;
    return to_unit(out[0], out[1]);
  }

  double normal() {
    if (cached_normal_) {
      cached_normal_ = false;
      return spare_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    cached_normal_ = true;
    return radius * std::cos(angle);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  static double to_unit(std::uint32_t lo, std::uint32_t hi) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t draw_ = 0;
  double spare_uniform_ = 0.0;
  double spare_normal_ = 0.0;
  bool cached_uniform_ = false;
  bool cached_normal_ = false;
};

}  // namespace pathkl
