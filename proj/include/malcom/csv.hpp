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

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "malcom/error.hpp"

namespace malcom::csv {

struct NumericTable {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line per row
  bool had_header = false;
};

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline bool parse_double(std::string_view cell, double& out) {
  cell = trim(cell);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size();
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

/// Reads a comma-separated numeric file. Blank lines are skipped. When
/// `allow_header` is set, a first non-blank line that does not parse as
/// numbers is treated as a header. Every other parse problem is an error
/// naming the line.
inline NumericTable read_numeric(const std::filesystem::path& path,
                                 bool allow_header) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  NumericTable table;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    std::vector<double> row(cells.size());
    bool ok = true;
    std::size_t bad = 0;
    for (std::size_t c = 0; c < cells.size() && ok; ++c) {
      ok = parse_double(cells[c], row[c]);
      bad = c;
    }
    if (!ok) {
      if (allow_header && table.rows.empty() && !table.had_header) {
        table.had_header = true;
        continue;
      }
      throw Error(path.string() + ":" + std::to_string(line_no) +
                  ": non-numeric cell in column " + std::to_string(bad + 1));
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(width) + " columns, found " +
                  std::to_string(row.size()));
    table.rows.push_back(std::move(row));
    table.line_numbers.push_back(line_no);
  }
  if (in.bad()) throw Error("read error on " + path.string());
  if (table.rows.empty()) throw Error(path.string() + ": no data rows");
  return table;
}

}  // namespace malcom::csv
