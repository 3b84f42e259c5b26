#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "epscpmg/errors.hpp"

namespace epscpmg::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based child-seed derivation: a pure function of
// (master, stream, counter), so worker order never affects results.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t counter) {
  std::uint64_t s = master;
  std::uint64_t h = splitmix64(s);
  s ^= stream * 0xff51afd7ed558ccdULL + 0x2545f4914f6cdd1dULL;
  h ^= splitmix64(s);
  s ^= counter * 0xc4ceb9fe1a85ec53ULL + 0x9e3779b97f4a7c15ULL;
  h ^= splitmix64(s);
  return h;
}

// Seed streams used across the toolkit.
inline constexpr std::uint64_t kStreamConfiguration = 1;
inline constexpr std::uint64_t kStreamTrajectory = 2;
inline constexpr std::uint64_t kStreamNoise = 3;

// mt19937_64 plus explicit samplers.  The standard distributions are
// implementation-defined, so outputs would not be reproducible across
// standard libraries; these samplers pin the exact draw sequence.
class Random {
 public:
  explicit Random(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1).
  double uniform01() { return (engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  // Exponential with the given mean; mean = +inf returns +inf.
  double exponential(double mean) {
    if (std::isinf(mean)) return mean;
    return -mean * std::log1p(-uniform01());
  }

  // Standard normal (Box-Muller, cached pair).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  int sign() { return (engine_() & 1ULL) ? 1 : -1; }

  // Exact Poisson sampling via additivity: chunks of mean <= 30 drawn with
  // the product method, so large means stay exact without underflow.
  std::int64_t poisson(double mean) {
    if (mean < 0.0) throw NumericalError("poisson: negative mean");
    std::int64_t total = 0;
    while (mean > 30.0) {
      total += poisson_small(30.0);
      mean -= 30.0;
    }
    total += poisson_small(mean);
    return total;
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::int64_t poisson_small(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    std::int64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform01();
    } while (p > limit);
    return k - 1;
  }

  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace epscpmg::rng
