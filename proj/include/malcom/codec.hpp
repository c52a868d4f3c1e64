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

// Source coding for quantized residuals.
//
// Wire layout of an EncodedMessage (all integers little-endian):
//
//   offset  size  field
//   0       4     dim              (u32)
//   4       2     levels_count L   (u16)
//   6       2     implicit_symbol  (u16, alphabet index)
//   8       8     min_val          (IEEE-754 binary64)
//   16      8     range            (IEEE-754 binary64)
//   24      ...   payload, MSB-first, zero-padded to a byte boundary
//
// The alphabet has L + 1 symbols: index 0 is the exact-zero symbol and
// index k + 1 is quantization level k. The payload carries the type vector
// (Elias omega of count + 1 for every alphabet index in order) followed by
// the Golomb-coded run-lengths of each non-implicit symbol's support over
// the positions not yet claimed by earlier symbols.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "malcom/bitstream.hpp"
#include "malcom/error.hpp"
#include "malcom/quantizer.hpp"

namespace malcom {

inline constexpr std::size_t kHeaderBytes = 24;

// ---------------------------------------------------------------------------
// Integer codes

inline void elias_omega_encode(BitWriter& w, std::uint64_t n) {
  if (n == 0) throw Error("elias_omega_encode: n must be >= 1");
  std::pair<std::uint64_t, unsigned> groups[8];
  int count = 0;
  while (n > 1) {
    const auto len = static_cast<unsigned>(std::bit_width(n));
    groups[count++] = {n, len};
    n = len - 1;
  }
  while (count-- > 0) w.put_bits(groups[count].first, groups[count].second);
  w.put(false);
}

inline std::uint64_t elias_omega_decode(BitReader& r) {
  std::uint64_t n = 1;
  while (r.get()) {
    if (n >= 64) throw DecodeError("Elias omega value overflows 64 bits", r.position());
    n = (std::uint64_t{1} << n) | r.get_bits(static_cast<unsigned>(n));
  }
  return n;
}

// Unary quotient (q ones, then a zero) and truncated-binary remainder with
// b = ceil(log2 M) and cutoff 2^b - M.
inline void golomb_encode(BitWriter& w, std::uint64_t value, std::uint64_t m) {
  if (m == 0) throw Error("golomb_encode: parameter must be >= 1");
  const std::uint64_t q = value / m;
  const std::uint64_t rem = value % m;
  for (std::uint64_t i = 0; i < q; ++i) w.put(true);
  w.put(false);
  if (m == 1) return;
  const auto b = static_cast<unsigned>(std::bit_width(m - 1));
  const std::uint64_t cutoff = (std::uint64_t{1} << b) - m;
  if (rem < cutoff)
    w.put_bits(rem, b - 1);
  else
    w.put_bits(rem + cutoff, b);
}

inline std::uint64_t golomb_decode(BitReader& r, std::uint64_t m) {
  if (m == 0) throw Error("golomb_decode: parameter must be >= 1");
  std::uint64_t q = 0;
  while (r.get()) ++q;
  std::uint64_t rem = 0;
  if (m > 1) {
    const auto b = static_cast<unsigned>(std::bit_width(m - 1));
    const std::uint64_t cutoff = (std::uint64_t{1} << b) - m;
    rem = r.get_bits(b - 1);
    if (rem >= cutoff) rem = ((rem << 1) | (r.get() ? 1u : 0u)) - cutoff;
  }
  if (q > (std::numeric_limits<std::uint64_t>::max() - rem) / m)
    throw DecodeError("Golomb value overflows 64 bits", r.position());
  return q * m + rem;
}

// Golomb parameter for coding `count` hits among `remaining` positions:
// max(1, round(ln 2 * (remaining - count) / count)).
inline std::uint64_t golomb_parameter(std::uint64_t remaining,
                                      std::uint64_t count) {
  const double gap = std::numbers::ln2 * static_cast<double>(remaining - count);
  const double m = std::round(gap / static_cast<double>(count));
  return m < 1.0 ? 1 : static_cast<std::uint64_t>(m);
}

// ---------------------------------------------------------------------------
// Type vector

inline std::size_t alphabet_index(std::int32_t symbol) noexcept {
  return static_cast<std::size_t>(symbol + 1);
}

inline std::int32_t symbol_of(std::size_t alphabet_idx) noexcept {
  return static_cast<std::int32_t>(alphabet_idx) - 1;
}

// Occurrence count per alphabet symbol: exact-zero first, then levels.
struct TypeVector {
  std::vector<std::uint64_t> counts;
  std::size_t dim = 0;

  std::vector<double> frequencies() const {
    std::vector<double> f(counts.size());
    for (std::size_t a = 0; a < counts.size(); ++a)
      f[a] = static_cast<double>(counts[a]) / static_cast<double>(dim);
    return f;
  }

  // Most frequent symbol, ties to the lowest alphabet index.
  std::size_t implicit_symbol() const {
    return static_cast<std::size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
};

inline TypeVector compute_type_vector(const QuantizedResidual& q) {
  TypeVector tv;
  tv.dim = q.dim();
  tv.counts.assign(std::size_t{q.levels_count} + 1, 0);
  for (std::int32_t s : q.levels) {
    if (s < kExactZero || s >= static_cast<std::int32_t>(q.levels_count))
      throw Error("compute_type_vector: symbol out of range");
    ++tv.counts[alphabet_index(s)];
  }
  return tv;
}

// ---------------------------------------------------------------------------
// Messages

struct EncodedMessage {
  std::uint32_t dim = 0;
  std::uint16_t levels_count = 0;
  std::uint16_t implicit_symbol = 0;
  double min_val = 0.0;
  double range = 0.0;
  std::vector<std::uint8_t> payload;
  std::size_t payload_bit_len = 0;

  // Bits on the wire: header plus byte-padded payload.
  std::uint64_t wire_bits() const noexcept {
    return 8 * (kHeaderBytes + payload.size());
  }

  std::vector<std::uint8_t> to_bytes() const {
    std::vector<std::uint8_t> out(kHeaderBytes + payload.size());
    auto put_le = [&out](std::size_t at, std::uint64_t v, int n) {
      for (int k = 0; k < n; ++k)
        out[at + k] = static_cast<std::uint8_t>(v >> (8 * k));
    };
    put_le(0, dim, 4);
    put_le(4, levels_count, 2);
    put_le(6, implicit_symbol, 2);
    put_le(8, std::bit_cast<std::uint64_t>(min_val), 8);
    put_le(16, std::bit_cast<std::uint64_t>(range), 8);
    std::copy(payload.begin(), payload.end(), out.begin() + kHeaderBytes);
    return out;
  }

  // The payload length on the wire is only known to byte granularity.
  static EncodedMessage from_bytes(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes)
      throw DecodeError("message shorter than the 24-byte header", 0);
    auto get_le = [&bytes](std::size_t at, int n) {
      std::uint64_t v = 0;
      for (int k = 0; k < n; ++k)
        v |= static_cast<std::uint64_t>(bytes[at + k]) << (8 * k);
      return v;
    };
    EncodedMessage m;
    m.dim = static_cast<std::uint32_t>(get_le(0, 4));
    m.levels_count = static_cast<std::uint16_t>(get_le(4, 2));
    m.implicit_symbol = static_cast<std::uint16_t>(get_le(6, 2));
    m.min_val = std::bit_cast<double>(get_le(8, 8));
    m.range = std::bit_cast<double>(get_le(16, 8));
    m.payload.assign(bytes.begin() + kHeaderBytes, bytes.end());
    m.payload_bit_len = 8 * m.payload.size();
    return m;
  }

  friend bool operator==(const EncodedMessage&, const EncodedMessage&) = default;
};

namespace detail {

inline EncodedMessage make_header(const QuantizedResidual& q) {
  if (q.dim() == 0) throw Error("encode: empty residual");
  if (q.dim() > std::numeric_limits<std::uint32_t>::max())
    throw Error("encode: dim exceeds 32 bits");
  if (q.levels_count < 2 || q.levels_count > kMaxLevels)
    throw Error("encode: levels_count out of range");
  EncodedMessage m;
  m.dim = static_cast<std::uint32_t>(q.dim());
  m.levels_count = static_cast<std::uint16_t>(q.levels_count);
  m.min_val = q.min_val;
  m.range = q.range;
  return m;
}

inline void check_header(const EncodedMessage& msg) {
  if (msg.dim == 0) throw DecodeError("header dim is zero", 0);
  if (msg.levels_count < 2)
    throw DecodeError("header levels_count must be >= 2", 0);
  if (!std::isfinite(msg.min_val) || !std::isfinite(msg.range) ||
      msg.range < 0.0)
    throw DecodeError("header min/range not finite or range negative", 0);
  if (msg.payload_bit_len > 8 * msg.payload.size())
    throw DecodeError("payload_bit_len exceeds payload buffer", 0);
}

// Up to 7 zero padding bits may follow the last codeword.
inline void check_trailer(BitReader& r) {
  const std::size_t start = r.position();
  if (r.remaining() >= 8) throw DecodeError("trailing data after payload", start);
  while (r.remaining() > 0) {
    if (r.get()) throw DecodeError("nonzero padding bits", start);
  }
}

inline void check_flat_range(const QuantizedResidual& q) {
  if (q.range != 0.0) return;
  for (std::int32_t s : q.levels) {
    if (s > 0) throw DecodeError("nonzero level with zero range", 0);
  }
}

}  // namespace detail

/// Encodes the type vector and per-symbol supports.
///
/// The most frequent symbol is implicit. Every other symbol with a nonzero
/// count, in alphabet order, codes the run of unclaimed positions preceding
/// each of its occurrences with Golomb parameter
/// golomb_parameter(|unclaimed|, count); the run after its last occurrence
/// is implied by the count and never sent.
inline EncodedMessage encode(const QuantizedResidual& q) {
  EncodedMessage msg = detail::make_header(q);
  const TypeVector tv = compute_type_vector(q);
  const std::size_t implicit = tv.implicit_symbol();
  msg.implicit_symbol = static_cast<std::uint16_t>(implicit);

  BitWriter w;
  for (std::uint64_t c : tv.counts) elias_omega_encode(w, c + 1);

  std::vector<std::uint32_t> unclaimed(q.dim());
  std::iota(unclaimed.begin(), unclaimed.end(), 0u);
  std::vector<std::uint32_t> next;
  next.reserve(q.dim());
  for (std::size_t a = 0; a < tv.counts.size(); ++a) {
    const std::uint64_t count = tv.counts[a];
    if (a == implicit || count == 0) continue;
    const std::uint64_t m = golomb_parameter(unclaimed.size(), count);
    std::uint64_t run = 0;
    std::uint64_t seen = 0;
    next.clear();
    for (std::size_t k = 0; k < unclaimed.size(); ++k) {
      const std::uint32_t idx = unclaimed[k];
      if (seen < count && alphabet_index(q.levels[idx]) == a) {
        golomb_encode(w, run, m);
        run = 0;
        ++seen;
      } else {
        ++run;
        next.push_back(idx);
      }
    }
    unclaimed.swap(next);
  }
  msg.payload_bit_len = w.bit_len();
  msg.payload = std::move(w).take_bytes();
  return msg;
}

inline QuantizedResidual decode(const EncodedMessage& msg) {
  detail::check_header(msg);
  const std::size_t alphabet = std::size_t{msg.levels_count} + 1;
  if (msg.implicit_symbol >= alphabet)
    throw DecodeError("implicit symbol outside the alphabet", 0);
  BitReader r(msg.payload, msg.payload_bit_len);

  std::vector<std::uint64_t> counts(alphabet);
  std::uint64_t total = 0;
  for (std::size_t a = 0; a < alphabet; ++a) {
    const std::size_t at = r.position();
    const std::uint64_t c = elias_omega_decode(r) - 1;
    if (c > msg.dim || total + c > msg.dim)
      throw DecodeError("type vector counts exceed dim", at);
    counts[a] = c;
    total += c;
  }
  if (total != msg.dim)
    throw DecodeError("type vector counts do not sum to dim", r.position());

  QuantizedResidual q;
  q.levels_count = msg.levels_count;
  q.min_val = msg.min_val;
  q.range = msg.range;
  q.levels.assign(msg.dim, kExactZero);

  std::vector<std::uint32_t> unclaimed(msg.dim);
  std::iota(unclaimed.begin(), unclaimed.end(), 0u);
  std::vector<std::uint8_t> claimed;
  std::vector<std::uint32_t> next;
  for (std::size_t a = 0; a < alphabet; ++a) {
    const std::uint64_t count = counts[a];
    if (a == msg.implicit_symbol || count == 0) continue;
    const std::uint64_t m = golomb_parameter(unclaimed.size(), count);
    claimed.assign(unclaimed.size(), 0);
    std::uint64_t cursor = 0;
    for (std::uint64_t k = 0; k < count; ++k) {
      const std::size_t at = r.position();
      const std::uint64_t run = golomb_decode(r, m);
      if (run >= unclaimed.size() - cursor)
        throw DecodeError("run-length overruns the unclaimed index set", at);
      cursor += run;
      claimed[cursor] = 1;
      q.levels[unclaimed[cursor]] = symbol_of(a);
      ++cursor;
    }
    next.clear();
    for (std::size_t k = 0; k < unclaimed.size(); ++k) {
      if (!claimed[k]) next.push_back(unclaimed[k]);
    }
    unclaimed.swap(next);
  }
  for (std::uint32_t idx : unclaimed)
    q.levels[idx] = symbol_of(msg.implicit_symbol);
  detail::check_trailer(r);
  detail::check_flat_range(q);
  return q;
}

// ---------------------------------------------------------------------------
// Baseline: every entry coded on its own as Elias omega of (index + 1).

inline EncodedMessage baseline_per_entry_encode(const QuantizedResidual& q) {
  EncodedMessage msg = detail::make_header(q);
  BitWriter w;
  for (std::int32_t s : q.levels) {
    if (s < kExactZero || s >= static_cast<std::int32_t>(q.levels_count))
      throw Error("baseline_per_entry_encode: symbol out of range");
    elias_omega_encode(w, alphabet_index(s) + 1);
  }
  msg.payload_bit_len = w.bit_len();
  msg.payload = std::move(w).take_bytes();
  return msg;
}

inline QuantizedResidual baseline_per_entry_decode(const EncodedMessage& msg) {
  detail::check_header(msg);
  BitReader r(msg.payload, msg.payload_bit_len);
  QuantizedResidual q;
  q.levels_count = msg.levels_count;
  q.min_val = msg.min_val;
  q.range = msg.range;
  q.levels.resize(msg.dim);
  for (auto& s : q.levels) {
    const std::size_t at = r.position();
    const std::uint64_t v = elias_omega_decode(r) - 1;
    if (v > msg.levels_count)
      throw DecodeError("symbol outside the alphabet", at);
    s = symbol_of(static_cast<std::size_t>(v));
  }
  detail::check_trailer(r);
  detail::check_flat_range(q);
  return q;
}

// ---------------------------------------------------------------------------
// Rate calculators

/// Per-coordinate bit bound for the support coder given a type vector:
///   H(f) + 2.914 (1 - f0) + f0 log2 f0 + sum_{l>=1} f_l log2(1 - sum_{m<l} f_m)
/// with f sorted in descending order. 0 log 0 and log2 of an exhausted
/// remainder both count as 0.
inline double bit_bound(const TypeVector& tv) {
  if (tv.dim == 0) throw Error("bit_bound: dim must be >= 1");
  std::vector<double> f = tv.frequencies();
  std::sort(f.begin(), f.end(), std::greater<>());
  double entropy = 0.0;
  for (double x : f) {
    if (x > 0.0) entropy -= x * std::log2(x);
  }
  double bound = entropy + 2.914 * (1.0 - f[0]);
  if (f[0] > 0.0) bound += f[0] * std::log2(f[0]);
  double cumulative = f[0];
  for (std::size_t l = 1; l < f.size(); ++l) {
    const double rest = 1.0 - cumulative;
    if (f[l] > 0.0 && rest > 0.0) bound += f[l] * std::log2(rest);
    cumulative += f[l];
  }
  return bound;
}

struct LaplaceRateModel {
  double rho = 1.0;      // Laplace diversity of the residual entries
  double range_r = 1.0;  // quantizer range
  std::uint32_t levels_count = 2;

  double delta() const {
    return range_r / (2.0 * static_cast<double>(levels_count) * rho);
  }
};

/// Bits per coordinate under the Laplace residual model, as a function of
/// delta = r / (2 L rho):
///   2.914 e^-delta + 2 sinh(delta) (1 - log2(1 - e^-2delta)) / (e^2delta - 1)
/// evaluated through the identity 2 sinh(x) / (e^2x - 1) = e^-x so that
/// large delta does not overflow.
inline double laplace_rate_bound(double delta) {
  if (!(delta > 0.0)) throw Error("laplace_rate_bound: delta must be > 0");
  const double tail = -std::log2(-std::expm1(-2.0 * delta));
  return std::exp(-delta) * (2.914 + 1.0 + tail);
}

inline double laplace_rate_bound(const LaplaceRateModel& model) {
  if (!(model.rho > 0.0) || !(model.range_r > 0.0) || model.levels_count < 1)
    throw Error("laplace_rate_bound: rho, range and levels must be positive");
  return laplace_rate_bound(model.delta());
}

// Range that contains max(p) - min(p) with probability about 1 - epsilon for
// d Laplace(rho) entries: 2 rho ln(d / epsilon).
inline double adaptive_range_rule(double rho, double dim, double epsilon) {
  if (!(rho > 0.0)) throw Error("adaptive_range_rule: rho must be > 0");
  if (!(dim >= 1.0)) throw Error("adaptive_range_rule: dim must be >= 1");
  if (!(epsilon > 0.0 && epsilon <= 1.0))
    throw Error("adaptive_range_rule: epsilon must be in (0, 1]");
  return 2.0 * rho * std::log(dim / epsilon);
}

}  // namespace malcom
