// Copyright 2026 The Gridlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace gridlab {

// Domain-separation tags. Every random decision in the library draws from a
// stream keyed by (seed, tag, index) so that adding a consumer never shifts
// the draws of another.
namespace stream_tag {
inline constexpr std::uint64_t kLayout = 0x4c41594f55540001ULL;
inline constexpr std::uint64_t kPlacement = 0x504c414345000002ULL;
inline constexpr std::uint64_t kFlips = 0x464c495053000003ULL;
inline constexpr std::uint64_t kSpawn = 0x535041574e000004ULL;
inline constexpr std::uint64_t kSticky = 0x535449434b000005ULL;
inline constexpr std::uint64_t kPolicy = 0x504f4c4943000006ULL;
inline constexpr std::uint64_t kInit = 0x494e495400000007ULL;
inline constexpr std::uint64_t kPools = 0x504f4f4c53000008ULL;
inline constexpr std::uint64_t kWorker = 0x574f524b45000009ULL;
inline constexpr std::uint64_t kHyper = 0x485950455200000aULL;
inline constexpr std::uint64_t kEpisode = 0x455049534400000bULL;
inline constexpr std::uint64_t kBrute = 0x425255544500000cULL;
}  // namespace stream_tag

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                                    std::uint64_t index = 0) {
  return mix64(mix64(seed ^ tag) + 0x9E3779B97F4A7C15ULL * (index + 1));
}

/// SplitMix64 generator. All integer and floating-point draws are defined in
/// terms of raw 64-bit outputs, so sequences are identical on every platform
/// (std:: distributions are implementation-defined and are not used).
class Rng {
 public:
  using result_type = std::uint64_t;

  constexpr explicit Rng(std::uint64_t seed = 0) : state_(seed) {}
  constexpr Rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0)
      : state_(derive_seed(seed, tag, index)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  constexpr result_type operator()() { return next(); }

  constexpr std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  // Uniform integer in [0, n) by rejection; n must be positive.
  constexpr std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  // Uniform double in [0, 1) with 53 bits of resolution.
  constexpr double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  constexpr bool bernoulli(double p) { return uniform() < p; }

  // log-uniform on [lo, hi], lo > 0
  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  template <class T>
  constexpr void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  constexpr std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace gridlab
