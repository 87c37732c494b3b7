#ifndef QRFVIMP_RNG_HPP
#define QRFVIMP_RNG_HPP

#include <cstdint>
#include <initializer_list>

#include "qrfvimp/math.hpp"

namespace qrfvimp {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Mixes a master seed with stream identifiers into a stream seed.
/// Used for per-tree streams and per-replication simulation seeds, so that
/// parallel work is reproducible regardless of scheduling.
inline std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t s = seed ^ 0x6a09e667f3bcc909ULL;
  std::uint64_t h = detail::splitmix64(s);
  for (std::uint64_t id : ids) {
    s ^= id + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= detail::splitmix64(s);
  }
  return h;
}

inline std::uint64_t double_bits(double v) {
  union {
    double d;
    std::uint64_t u;
  } conv;
  conv.d = v;
  return conv.u;
}

// xoshiro256++ with hand-rolled distributions. The standard <random>
// distributions are implementation-defined, which breaks byte-identical
// artifacts across toolchains; everything here is fully specified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = detail::splitmix64(sm);
  }

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    return Rng(mix_seed(seed, ids));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1); safe to feed into normal_quantile.
  double uniform_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Unbiased uniform integer in [0, bound) by rejection.
  std::uint64_t uniform_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal by inverse-CDF; deterministic across platforms.
  double normal() { return normal_quantile(uniform_open01()); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

}  // namespace qrfvimp

#endif  // QRFVIMP_RNG_HPP
