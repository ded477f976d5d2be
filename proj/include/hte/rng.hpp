#pragma once

// Counter-based RNG keyed by (seed, stream id, variable tag). Each draw is a
// pure function of the key and a per-stream counter, so simulation of
// distinct units is reproducible independent of thread scheduling.

#include <cmath>
#include <cstdint>
#include <numbers>

#include "hte/core.hpp"

namespace hte {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Two mixing rounds: one round of splitmix64 leaves measurable bias when the
// inputs form a low-entropy grid (consecutive seeds/ids), which is exactly the
// access pattern of the simulation harness.
inline std::uint64_t mixKey(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) + 0x632be59bd9b4e019ULL * (b + 1));
}

}  // namespace detail

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t streamId = 0, std::uint64_t tag = 0)
      : key_(detail::mixKey(detail::mixKey(seed, streamId), tag)) {}

  /// Uniform draw on the open interval (0,1).
  double uniform() {
    const std::uint64_t bits = detail::splitmix64(detail::splitmix64(key_ + counter_++));
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (two uniforms per draw).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  double gumbel(double location, double scale) {
    return gumbelQuantile(uniform(), location, scale);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace hte
