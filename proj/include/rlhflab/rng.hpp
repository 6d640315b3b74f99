#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "rlhflab/errors.hpp"

namespace rlhflab {

// mt19937_64 with hand-rolled output transforms. The engine's output sequence
// is fully specified by the standard; std::uniform_real_distribution and
// friends are not, so artifacts sampled through them would not be stable
// across standard libraries. Transforms here are spelled out instead.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  uint64_t uniform_below(uint64_t n) {
    if (n == 0) throw ContractViolation("uniform_below: n must be positive");
    if ((n & (n - 1)) == 0) return engine_() & (n - 1);
    // Rejection keeps the draw exactly uniform (no modulo bias).
    uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n) - 1;
    uint64_t v = engine_();
    while (v > limit) v = engine_();
    return v % n;
  }

  // Standard normal via Box-Muller (one value per call; the pair's second
  // member is cached).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Index sampled from an explicit probability vector (walks the CDF; the
  // final index absorbs any rounding slack).
  size_t categorical(std::span<const double> probs) {
    if (probs.empty()) throw ContractViolation("categorical: empty distribution");
    double u = uniform01();
    double acc = 0.0;
    for (size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return probs.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace rlhflab
