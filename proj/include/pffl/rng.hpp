#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pffl {

// Deterministic random stream. mt19937_64 output is pinned by the standard;
// the scaling and Box-Muller steps below are spelled out so the same seed
// yields the same floats on every platform (std::*_distribution would not).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one spare cached per pair.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n), n >= 1. Rejection-free modulo is fine here:
  // n is always tiny compared to 2^64, the bias is unobservable.
  std::uint64_t index(std::uint64_t n) { return engine_() % n; }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pffl
