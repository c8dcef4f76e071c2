#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "drldo/errors.hpp"

namespace drldo {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic, platform-independent PRNG (xoshiro256**).
///
/// The standard-library distributions are not bit-stable across
/// implementations, and generated corpora are covered by golden-file tests,
/// so all sampling here is self-contained.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t next_u64() {
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

  /// Uniform double in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Uses rejection to avoid modulo bias.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw ParameterError("uniform_index: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller. Consumes exactly two uniforms per call.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Exact Poisson sample (Knuth's product-of-uniforms method). Large rates
  /// are split into chunks so exp(-rate) never underflows.
  long poisson(double rate) {
    if (!(rate >= 0.0)) throw ParameterError("poisson: rate must be >= 0");
    long total = 0;
    while (rate > 256.0) {
      total += poisson_small(256.0);
      rate -= 256.0;
    }
    return total + poisson_small(rate);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  long poisson_small(double rate) {
    if (rate == 0.0) return 0;
    const double threshold = std::exp(-rate);
    long k = 0;
    double product = 1.0;
    do {
      ++k;
      product *= uniform();
    } while (product > threshold);
    return k - 1;
  }

  std::uint64_t state_[4];
};

/// Derives an independent stream seed from (seed, tag, index). Used to give
/// every pipeline stage and every per-sample search its own stream while
/// keeping the whole run reproducible from one global seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t sm = seed ^ h;
  std::uint64_t a = splitmix64(sm);
  sm ^= index * 0x9e3779b97f4a7c15ULL;
  return a ^ splitmix64(sm);
}

}  // namespace drldo
