/*
 * Copyright 2026 PISE Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "pise/common.hpp"

// Seeded random streams with hand-rolled distributions. The standard
// library's distribution objects are implementation-defined, which would
// break the bit-reproducibility contract; mt19937_64 itself is fully
// specified, so everything downstream of it is deterministic.

namespace pise {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Derives the seed of a named substream. Every consumer of randomness in a
/// run pulls from its own substream so adding a consumer never perturbs the
/// draws seen by the others.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ fnv1a64(tag)) + index);
}

/// Deterministic random stream: mt19937_64 plus portable samplers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection-free multiply-shift; bias is
  /// negligible for n far below 2^64 and the result is deterministic.
  std::uint64_t below(std::uint64_t n) {
    check(n > 0, "Rng::below requires n > 0");
    __uint128_t m = static_cast<__uint128_t>(engine_()) * n;
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (second value cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Poisson draw. Knuth's product method below lambda = 10, Hormann's
  /// PTRS transformed rejection above it (exact, O(1) per draw).
  std::uint64_t poisson(double lambda) {
    check(lambda >= 0.0 && std::isfinite(lambda),
          "poisson rate must be finite and nonnegative");
    if (lambda == 0.0) return 0;
    if (lambda < 10.0) return poisson_knuth(lambda);
    return poisson_ptrs(lambda);
  }

  /// Fisher-Yates shuffle.
  template <class Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t poisson_knuth(double lambda) {
    const double limit = std::exp(-lambda);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  std::uint64_t poisson_ptrs(double mu) {
    const double b = 0.931 + 2.53 * std::sqrt(mu);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mu = std::log(mu);
    for (;;) {
      double u = uniform() - 0.5;
      double v = uniform();
      double us = 0.5 - std::abs(u);
      double kf = std::floor((2.0 * a / us + b) * u + mu + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
          kf * log_mu - mu - std::lgamma(kf + 1.0))
        return static_cast<std::uint64_t>(kf);
    }
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pise
