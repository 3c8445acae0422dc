// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace neuropool {

/// Deterministic random stream based on the splitmix64 generator.
///
/// The generator is fixed by this implementation (not std::mt19937 or any
/// libstdc++ distribution), so a given seed produces the same draw sequence
/// on every platform and compiler. All randomness in the library flows
/// through explicitly seeded RngStream instances.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }
  static const char* algorithm() { return "splitmix64"; }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform draw in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Uses the multiply-high reduction; the
  /// residual bias (< 2^-64 per draw) is irrelevant at our sample sizes.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; the second deviate is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  /// Independent substream for (seed, salt); used to give folds, subjects,
  /// and model instances their own reproducible streams.
  RngStream derive(std::uint64_t salt) const {
    RngStream mixer(seed_ ^ (0xD1B54A32D192ED03ULL * (salt + 1)));
    mixer.next_u64();
    return RngStream(mixer.next_u64());
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace neuropool
