#pragma once

// Deterministic random source. splitmix64 core with hand-rolled uniform and
// normal transforms so that identical seeds give bit-identical streams on any
// platform (std::normal_distribution is implementation-defined).

#include <cstdint>
#include <cmath>

#include "feederopt/common.hpp"

namespace feederopt {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two uniforms per pair, caches the second.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * kPi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return mean + stddev * (r * std::cos(th));
  }

  // Derives an independent stream for a named substream; stable across runs.
  static std::uint64_t derive(std::uint64_t seed, const std::string& tag) {
    std::uint64_t h = 1469598103934665603ULL ^ seed;
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    return h;
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace feederopt
