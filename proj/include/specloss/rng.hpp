#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace specloss {

// SplitMix64 finalizer; used to expand one seed into independent streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed for stream `index` of stage `stage` under `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stage,
                                    std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(master) ^ (stage * 0xD1B54A32D192ED03ULL)) + index);
}

// Random source with portable, documented sampling algorithms. Only the
// mt19937_64 bit stream comes from the standard library; every distribution
// is implemented here so a seed reproduces the same values on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling removes modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal, Marsaglia polar method. The second variate of each
  // accepted pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  // Poisson variate with mean `lambda`:
  //   lambda < 30          sequential inversion
  //   30 <= lambda < 1000  PTRD transformed rejection (Hoermann 1993)
  //   lambda >= 1000       rounded normal approximation, clamped at 0
  double poisson(double lambda) {
    if (lambda <= 0.0) return 0.0;
    if (lambda < 30.0) return poisson_inversion(lambda);
    if (lambda < 1000.0) return poisson_ptrd(lambda);
    const double k = std::floor(lambda + std::sqrt(lambda) * normal() + 0.5);
    return k < 0.0 ? 0.0 : k;
  }

 private:
  double poisson_inversion(double lambda) {
    const double u = uniform();
    double p = std::exp(-lambda);
    double cdf = p;
    double k = 0.0;
    // The cap guards against u landing in the rounding gap of the CDF tail.
    while (u > cdf && k < 200.0) {
      k += 1.0;
      p *= lambda / k;
      cdf += p;
    }
    return k;
  }

  double poisson_ptrd(double lambda) {
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform();
      const double us = 0.5 - std::abs(u);
      const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
      if (us >= 0.07 && v <= vr) return k;
      if (k < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
          -lambda + k * loglam - std::lgamma(k + 1.0)) {
        return k;
      }
    }
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace specloss
