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

// Verbosity for the tools, read once from MALCOM_LOG
// (error | warn | info | debug; default warn). Messages go to stderr.

#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace malcom {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

inline LogLevel parse_log_level(std::string_view s) {
  if (s == "error") return LogLevel::kError;
  if (s == "info") return LogLevel::kInfo;
  if (s == "debug") return LogLevel::kDebug;
  return LogLevel::kWarn;
}

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("MALCOM_LOG");
    return env ? parse_log_level(env) : LogLevel::kWarn;
  }();
  return level;
}

inline void log(LogLevel level, std::string_view message) {
  if (level > log_level()) return;
  static constexpr std::string_view kNames[] = {"error", "warn", "info", "debug"};
  std::cerr << "[malcom " << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace malcom
