#pragma once

#include <cmath>
#include <cstdint>

namespace evadmm {

/// Counter-based deterministic generator.
///
/// Output i is SplitMix64's finalizer applied to seed + (i+1)*GAMMA, with
/// GAMMA = 0x9E3779B97F4A7C15. Streams are derived by mixing the stream id
/// into the seed, so (seed, stream) pairs give independent, reproducible
/// sequences that can be regenerated from the documented constants alone.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : base_(mix(seed ^ mix(stream + kGamma))) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix(base_ + counter_ * kGamma);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  /// Standard normal via Box-Muller (two uniforms per draw, no caching, so
  /// the consumed counter range is independent of call history).
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  /// Student's t with one degree of freedom (standard Cauchy).
  double student_t1() {
    double u = next_double();
    return std::tan(kPi * (u - 0.5));
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

}  // namespace evadmm
