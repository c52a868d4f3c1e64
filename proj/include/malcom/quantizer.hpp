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

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "malcom/error.hpp"
#include "malcom/rng.hpp"

namespace malcom {

// Symbol emitted for an input entry that is exactly zero.
inline constexpr std::int32_t kExactZero = -1;

// Largest level count representable in the 16-bit wire header.
inline constexpr std::uint32_t kMaxLevels = 65535;

/// Output of the residual quantizer: one symbol per entry plus the
/// normalization metadata the receiver needs to de-normalize.
///
/// Symbols are `kExactZero` or a level index in [0, levels_count).
struct QuantizedResidual {
  std::vector<std::int32_t> levels;
  double min_val = 0.0;
  double range = 0.0;
  std::uint32_t levels_count = 2;

  std::size_t dim() const noexcept { return levels.size(); }

  friend bool operator==(const QuantizedResidual&,
                         const QuantizedResidual&) = default;
};

struct ContractionParams {
  double tau;    // 1 + d / L^2
  double bound;  // 1 - 1 / tau
};

inline ContractionParams contraction_params(std::size_t dim,
                                            std::uint32_t levels) {
  if (dim < 1) throw Error("contraction_params: dim must be >= 1");
  if (levels < 2) throw Error("contraction_params: levels must be >= 2");
  const double l = static_cast<double>(levels);
  const double tau = 1.0 + static_cast<double>(dim) / (l * l);
  // d / (L^2 + d) is the same quantity without cancellation for huge L.
  const double bound =
      static_cast<double>(dim) / (l * l + static_cast<double>(dim));
  return {tau, bound};
}

template <class D>
concept DitherSource = requires(const D& d, std::size_t i) {
  { d(i) } -> std::convertible_to<double>;
};

/// Dithered uniform quantizer with adaptive range.
///
/// Entries are normalized by min/max of `p` into [0, 1] and mapped to
/// floor(p_hat * L + u), clamped to [0, L - 1]. Exact zeros map to
/// `kExactZero`; a constant nonzero vector (range 0) maps to level 0.
template <DitherSource Dither>
QuantizedResidual quantize(std::span<const double> p, std::uint32_t levels,
                           const Dither& dither) {
  if (p.empty()) throw Error("quantize: empty residual");
  if (levels < 2 || levels > kMaxLevels)
    throw Error("quantize: levels must be in [2, 65535], got " +
                std::to_string(levels));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]))
      throw Error("quantize: non-finite residual entry at index " +
                  std::to_string(i));
  }
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  QuantizedResidual q;
  q.levels_count = levels;
  q.min_val = *lo;
  q.range = *hi - *lo;
  if (!std::isfinite(q.range))
    throw Error("quantize: residual range overflows a double");
  q.levels.resize(p.size());

  const double l = static_cast<double>(levels);
  const auto top = static_cast<std::int32_t>(levels - 1);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) {
      q.levels[i] = kExactZero;
      continue;
    }
    if (q.range == 0.0) {
      q.levels[i] = 0;
      continue;
    }
    const double normalized = (p[i] - q.min_val) / q.range;
    const double u = static_cast<double>(dither(i));
    const double cell = std::floor(normalized * l + u);
    q.levels[i] = std::clamp(static_cast<std::int32_t>(cell), 0, top);
  }
  return q;
}

/// Receiver-side de-normalization: (range * level / L + min) / tau for
/// level symbols, exactly zero for `kExactZero`.
inline std::vector<double> dequantize(const QuantizedResidual& q) {
  if (q.levels.empty()) throw Error("dequantize: empty residual");
  if (q.levels_count < 2) throw Error("dequantize: levels must be >= 2");
  const double tau = contraction_params(q.dim(), q.levels_count).tau;
  const double l = static_cast<double>(q.levels_count);
  std::vector<double> out(q.dim(), 0.0);
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const std::int32_t s = q.levels[i];
    if (s == kExactZero) continue;
    if (s < 0 || static_cast<std::uint32_t>(s) >= q.levels_count)
      throw Error("dequantize: symbol out of range at index " +
                  std::to_string(i));
    out[i] = (q.range * (static_cast<double>(s) / l) + q.min_val) / tau;
  }
  return out;
}

/// Monte-Carlo mean of ||dequantize(quantize(p)) - p||^2 / ||p||^2 over
/// `trials` independent dithers.
inline double empirical_contraction(std::span<const double> p,
                                    std::uint32_t levels, std::size_t trials,
                                    std::uint64_t seed) {
  if (trials < 1) throw Error("empirical_contraction: trials must be >= 1");
  double norm_sq = 0.0;
  for (double v : p) norm_sq += v * v;
  if (!(norm_sq > 0.0))
    throw Error("empirical_contraction: zero vector has undefined ratio");
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const CounterDither dither{make_stream(seed, StreamTag::kMonteCarlo, t)};
    const auto q_hat = dequantize(quantize(p, levels, dither));
    double err = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double e = q_hat[i] - p[i];
      err += e * e;
    }
    total += err / norm_sq;
  }
  return total / static_cast<double>(trials);
}

}  // namespace malcom
