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

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "geoforge/core/error.hpp"
#include "geoforge/core/vector_math.hpp"

namespace geoforge {

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Content checksum of a file, as 16 hex digits.
inline std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for checksum: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes));
}

/// Lowercased ASCII alphanumeric runs; everything else separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Lowercase, runs of non-alphanumerics collapse to one hyphen, no leading or
/// trailing hyphen.
inline std::string slugify(std::string_view text) {
  std::string out;
  bool pending_dash = false;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      if (pending_dash && !out.empty()) out.push_back('-');
      pending_dash = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_dash = true;
    }
  }
  return out;
}

inline constexpr int kTokenHashes = 4;

/// Signed feature hashing of the token bag into `dim` buckets, L2-normalized.
/// Each token lands in kTokenHashes buckets so single collisions stay small.
inline DenseVector hashed_text_embedding(std::string_view text, std::size_t dim) {
  if (dim == 0) throw DimensionError("hashed_text_embedding: dim must be positive");
  std::vector<float> v(dim, 0.0f);
  for (const auto& tok : tokenize(text)) {
    for (int h = 0; h < kTokenHashes; ++h) {
      const std::uint64_t x = fnv1a64(tok, 0xcbf29ce484222325ULL ^ (std::uint64_t(h + 1) * 0x9E3779B97F4A7C15ULL));
      const std::size_t bucket = static_cast<std::size_t>(x % dim);
      v[bucket] += ((x >> 63) != 0U) ? -1.0f : 1.0f;
    }
  }
  if (l2_norm(v) == 0.0) {
    throw ZeroNormError("hashed_text_embedding: no tokens in \"" + std::string(text) + "\"");
  }
  return l2_normalize(DenseVector(std::move(v)));
}

}  // namespace geoforge
