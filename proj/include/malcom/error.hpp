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
#include <stdexcept>
#include <string>

namespace malcom {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment configuration; raised before any compute starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated bitstream. `offset()` is the payload bit position
// at which decoding stopped.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t bit_offset)
      : Error(what + " (at payload bit " + std::to_string(bit_offset) + ")"),
        offset_(bit_offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace malcom
