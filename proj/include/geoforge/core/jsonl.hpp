// Copyright 2026 The GeoForge Authors
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

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoforge/core/error.hpp"

namespace geoforge {

/// Calls `on_record(json, line_number)` for each non-blank line. Any failure,
/// JSON or semantic, is rethrown as a ParseError carrying the line number.
inline void read_jsonl(const std::filesystem::path& path,
                       const std::function<void(const nlohmann::json&, std::size_t)>& on_record) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      on_record(nlohmann::json::parse(line), line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const DuplicateIdError& e) {
      throw DuplicateIdError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DimensionError& e) {
      throw DimensionError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
}

inline void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

template <typename T, typename ToLine>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records, ToLine to_line) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(to_line(r));
  write_lines(path, lines);
}

}  // namespace geoforge
