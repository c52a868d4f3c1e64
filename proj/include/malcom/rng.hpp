// Copyright 2026 The malcom-psgd Authors. All Rights Reserved.
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
// =============================================================================

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

namespace malcom {

// Stream purposes. Each purpose gets its own key space so that e.g. the
// dither of node 3 in round 7 never collides with its mini-batch draw.
enum class StreamTag : std::uint64_t {
  kDither = 1,
  kBatch = 2,
  kData = 3,
  kPartition = 4,
  kInit = 5,
  kMonteCarlo = 6,
};

/// Stateless counter-based generator.
///
/// Every draw is a pure function of (key, counter), which keeps results
/// independent of call order and thread scheduling. The mixing function is
/// the SplitMix64 finalizer applied twice.
class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  constexpr std::uint64_t key() const noexcept { return key_; }

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix(key_ ^ mix(counter));
  }

  // Uniform on [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller on counters (2c, 2c+1), cosine branch.
  double normal(std::uint64_t counter) const noexcept {
    const double u1 = 1.0 - uniform(2 * counter);  // (0, 1]
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Zero-mean Laplace with diversity `scale`, by inverse CDF.
  double laplace(std::uint64_t counter, double scale) const noexcept {
    const double u = uniform(counter) - 0.5;
    const double a = 1.0 - 2.0 * std::abs(u);  // (0, 1]
    return (u < 0.0 ? scale : -scale) * std::log(a > 0.0 ? a : 0x1.0p-53);
  }

  // Uniform integer in [0, n) by multiply-shift; n > 0.
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const noexcept {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
  }

  constexpr CounterRng substream(std::uint64_t tag) const noexcept {
    return CounterRng(mix(key_ + mix(tag ^ 0x5851f42d4c957f2dULL)));
  }

 private:
  std::uint64_t key_;
};

// Key for (seed, purpose, a, b): e.g. (seed, kDither, node, round).
constexpr CounterRng make_stream(std::uint64_t seed, StreamTag tag,
                                 std::uint64_t a = 0,
                                 std::uint64_t b = 0) noexcept {
  return CounterRng(seed)
      .substream(static_cast<std::uint64_t>(tag))
      .substream(a)
      .substream(b);
}

// Per-entry dither source for the quantizer.
struct CounterDither {
  CounterRng rng;
  double operator()(std::size_t i) const noexcept { return rng.uniform(i); }
};

// Fixed dither value for every entry; used for golden fixtures and
// hand-checked examples.
struct ConstantDither {
  double value;
  double operator()(std::size_t) const noexcept { return value; }
};

}  // namespace malcom
