#ifndef CSIVA_RNG_HPP
#define CSIVA_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "csiva/common.hpp"

namespace csiva {

// 64-bit finalizer from SplitMix64 (Steele, Lea, Flood: "Fast splittable
// pseudorandom number generators").
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Derives an independent child seed from (seed, a, b). Every component that
// needs randomness receives a seed produced this way from the run's global
// seed, which keeps all outputs reproducible across platforms.
inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
  uint64_t s = mix64(seed + 0x9E3779B97F4A7C15ull);
  s = mix64(s ^ (a + 0x9E3779B97F4A7C15ull));
  s = mix64(s ^ (b + 0x9E3779B97F4A7C15ull));
  return s;
}

// SplitMix64 generator: the state advances by the golden-ratio increment and
// each output is the mix64 finalizer of the new state. Chosen over the
// standard-library engines because its full algorithm fits in a few lines and
// its distributions below are pinned here, not implementation-defined, so the
// same seed yields the same stream on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  // Uniform in [0, 1), 53 random mantissa bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [lo, hi], inclusive, bias-free by rejection.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw ValidationError("uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
    uint64_t reject_below = (0 - span) % span;
    for (;;) {
      uint64_t x = next_u64();
      if (x >= reject_below) return lo + static_cast<int64_t>(x % span);
    }
  }

  bool bernoulli(double p) { return next_unit() < p; }

  // Box-Muller, cosine branch only so each call consumes exactly two draws.
  double normal() {
    double u1 = 1.0 - next_unit();  // (0, 1], keeps log finite
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Zero-mean normal truncated at +/- cut standard deviations, by resampling.
  double truncated_normal(double stddev, double cut = 2.0) {
    for (;;) {
      double x = normal();
      if (std::fabs(x) <= cut) return stddev * x;
    }
  }

  // Marsaglia-Tsang; the alpha < 1 case boosts through Gamma(alpha + 1).
  double gamma(double alpha) {
    if (!(alpha > 0.0)) throw ValidationError("gamma: alpha must be positive");
    if (alpha < 1.0) {
      double u = 1.0 - next_unit();  // (0, 1]
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = next_unit();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Symmetric Dirichlet via normalized Gamma(alpha, 1) draws.
  void dirichlet(double alpha, int k, double* out) {
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      out[i] = gamma(alpha);
      sum += out[i];
    }
    if (sum <= 0.0) throw NumericError("dirichlet: degenerate draw");
    for (int i = 0; i < k; ++i) out[i] /= sum;
  }

  std::vector<double> dirichlet(double alpha, int k) {
    std::vector<double> out(static_cast<size_t>(k));
    dirichlet(alpha, k, out.data());
    return out;
  }

  // Index in [0, k) distributed by the (normalized) weights p.
  int categorical(const double* p, int k) {
    double u = next_unit();
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    return k - 1;  // rounding residue lands on the last category
  }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace csiva

#endif  // CSIVA_RNG_HPP
