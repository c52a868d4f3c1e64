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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "malcom/error.hpp"

namespace malcom {

// Append-only bit buffer, most-significant bit first within each byte.
class BitWriter {
 public:
  void put(bool bit) {
    if (bit_len_ % 8 == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bit_len_ % 8));
    ++bit_len_;
  }

  // Writes the low `count` bits of `value`, high bit first.
  void put_bits(std::uint64_t value, unsigned count) {
    for (unsigned k = count; k-- > 0;) put(((value >> k) & 1u) != 0);
  }

  std::size_t bit_len() const noexcept { return bit_len_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> take_bytes() && { return std::move(bytes_); }

  std::string to_string() const {
    std::string s;
    s.reserve(bit_len_);
    for (std::size_t i = 0; i < bit_len_; ++i)
      s.push_back((bytes_[i / 8] >> (7 - i % 8)) & 1u ? '1' : '0');
    return s;
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bit_len_ = 0;
};

// Bounded reader over the first `bit_len` bits of `bytes`.
class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> bytes, std::size_t bit_len)
      : bytes_(bytes), bit_len_(bit_len) {
    if (bit_len > bytes.size() * 8)
      throw DecodeError("bit length exceeds buffer", bytes.size() * 8);
  }

  bool get() {
    if (pos_ >= bit_len_) throw DecodeError("truncated payload", pos_);
    const bool bit = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
    ++pos_;
    return bit;
  }

  std::uint64_t get_bits(unsigned count) {
    std::uint64_t v = 0;
    for (unsigned k = 0; k < count; ++k) v = (v << 1) | (get() ? 1u : 0u);
    return v;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bit_len_ - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t bit_len_;
  std::size_t pos_ = 0;
};

// Parses a string of '0'/'1' characters; mostly useful in tests.
inline BitWriter bits_from_string(std::string_view s) {
  BitWriter w;
  for (char c : s) {
    if (c != '0' && c != '1') throw Error("bits_from_string: bad character");
    w.put(c == '1');
  }
  return w;
}

}  // namespace malcom
