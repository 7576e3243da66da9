#pragma once

// SplitMix64 generator with hash-derived substreams. Every random draw in the
// project goes through this so that results are bit-reproducible across
// platforms and independent of thread scheduling: each (condition, replication)
// unit of work gets its own stream derived from a master seed.

#include <cmath>
#include <cstdint>
#include <span>

namespace npmlca {

class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Index into probs by inverse CDF; probs must sum to ~1.
  int categorical(std::span<const double> probs) {
    const double u = next_double();
    double acc = 0.0;
    for (size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  // Standard normal via Box-Muller; the second value is discarded so each
  // draw consumes exactly two uniforms.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  uint64_t state_;
};

namespace detail {
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Derives a substream seed from a master seed and up to three stream labels.
inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = detail::mix64(master ^ 0x2545f4914f6cdd1dULL);
  h = detail::mix64(h ^ (a + 0x9e3779b97f4a7c15ULL));
  h = detail::mix64(h ^ (b + 0x6a09e667f3bcc909ULL));
  h = detail::mix64(h ^ (c + 0xbb67ae8584caa73bULL));
  return h;
}

}  // namespace npmlca
