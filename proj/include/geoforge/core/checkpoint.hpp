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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "geoforge/core/binary_io.hpp"
#include "geoforge/core/error.hpp"

namespace geoforge {

inline constexpr char kCheckpointMagic[] = "GEOCKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Row-major float32 tensor.
struct Tensor {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> data;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Versioned model envelope: magic, version, kind, string metadata, and an
/// ordered list of named tensors.
struct Checkpoint {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return t;
    }
    throw FormatError("checkpoint '" + kind + "' has no tensor '" + name + "'");
  }

  const std::string& meta_value(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw FormatError("checkpoint '" + kind + "' has no metadata '" + key + "'");
    return it->second;
  }

  std::string serialize() const {
    BinaryWriter w;
    w.bytes(kCheckpointMagic, 8);
    w.u32(kCheckpointVersion);
    w.str(kind);
    w.u32(static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
      w.str(k);
      w.str(v);
    }
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      w.str(name);
      w.u32(t.rows);
      w.u32(t.cols);
      for (float x : t.data) w.f32(x);
    }
    return w.data();
  }

  void save(const std::filesystem::path& path) const {
    BinaryWriter w;
    const std::string bytes = serialize();
    w.bytes(bytes.data(), bytes.size());
    w.save(path);
  }

  static Checkpoint parse(BinaryReader r) {
    r.expect_magic(std::string_view(kCheckpointMagic, 8));
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
      throw FormatError(r.source() + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    c.kind = r.str();
    const std::uint32_t nmeta = r.u32();
    for (std::uint32_t i = 0; i < nmeta; ++i) {
      std::string k = r.str();
      c.meta[k] = r.str();
    }
    const std::uint32_t ntensors = r.u32();
    for (std::uint32_t i = 0; i < ntensors; ++i) {
      std::string name = r.str();
      Tensor t;
      t.rows = r.u32();
      t.cols = r.u32();
      const std::uint64_t n = std::uint64_t(t.rows) * t.cols;
      if (n > (std::uint64_t(1) << 32)) throw FormatError(r.source() + ": tensor '" + name + "' too large");
      t.data.resize(n);
      for (auto& x : t.data) x = r.f32();
      c.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (!r.at_end()) throw FormatError(r.source() + ": trailing bytes after checkpoint");
    return c;
  }

  static Checkpoint load(const std::filesystem::path& path) { return parse(BinaryReader::from_file(path)); }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

}  // namespace geoforge
