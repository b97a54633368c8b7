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
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "geoforge/core/error.hpp"
#include "geoforge/core/jsonl.hpp"
#include "geoforge/core/records.hpp"
#include "geoforge/core/text.hpp"

namespace geoforge {

struct CorpusManifest {
  std::filesystem::path pins;
  std::filesystem::path queries;
  std::filesystem::path engagement;
  std::filesystem::path labels;
  Dims dims;
  std::uint64_t seed = 42;
};

/// Parses a key=value manifest. Relative paths resolve against the manifest's
/// directory. Blank lines and '#' comments are ignored; unknown keys are errors.
inline CorpusManifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  CorpusManifest m;
  std::string line;
  std::size_t line_no = 0;
  auto resolve = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() ? p : base / p;
  };
  auto parse_size = [&](const std::string& key, const std::string& v) -> std::size_t {
    try {
      std::size_t pos = 0;
      const long long x = std::stoll(v, &pos);
      if (pos != v.size() || x <= 0) throw std::invalid_argument(v);
      return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
      throw ParseError(path.string(), line_no, key + " must be a positive integer");
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), line_no, "expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key == "pins") m.pins = resolve(value);
    else if (key == "queries") m.queries = resolve(value);
    else if (key == "engagement") m.engagement = resolve(value);
    else if (key == "labels") m.labels = resolve(value);
    else if (key == "d_v") m.dims.visual = parse_size(key, value);
    else if (key == "d_t") m.dims.text = parse_size(key, value);
    else if (key == "ranker_dim") m.dims.ranker_output = parse_size(key, value);
    else if (key == "seed") {
      try {
        m.seed = std::stoull(value);
      } catch (const std::exception&) {
        throw ParseError(path.string(), line_no, "seed must be an unsigned integer");
      }
    } else {
      throw ParseError(path.string(), line_no, "unknown manifest key '" + key + "'");
    }
  }
  for (const auto* p : {&m.pins, &m.queries, &m.engagement, &m.labels}) {
    if (!p->empty() && !std::filesystem::exists(*p)) {
      throw ConfigError("manifest references missing file " + p->string());
    }
  }
  if (m.pins.empty()) throw ConfigError("manifest has no 'pins' entry");
  return m;
}

inline std::string manifest_text(const CorpusManifest& m) {
  auto rel = [](const std::filesystem::path& p) { return p.filename().string(); };
  std::string s;
  s += "pins=" + rel(m.pins) + "\n";
  if (!m.queries.empty()) s += "queries=" + rel(m.queries) + "\n";
  if (!m.engagement.empty()) s += "engagement=" + rel(m.engagement) + "\n";
  if (!m.labels.empty()) s += "labels=" + rel(m.labels) + "\n";
  s += "d_v=" + std::to_string(m.dims.visual) + "\n";
  s += "d_t=" + std::to_string(m.dims.text) + "\n";
  s += "ranker_dim=" + std::to_string(m.dims.ranker_output) + "\n";
  s += "seed=" + std::to_string(m.seed) + "\n";
  return s;
}

/// In-memory corpus. Immutable once loaded.
class Corpus {
 public:
  Dims dims;
  std::uint64_t seed = 42;
  std::vector<PinRecord> pins;
  std::vector<QueryRecord> queries;
  std::vector<EngagementRecord> engagement;
  std::vector<CandidatePair> candidates;

  /// Rebuilds lookup tables and checks invariants; call after mutating.
  void index() {
    pin_pos_.clear();
    query_pos_.clear();
    for (std::size_t i = 0; i < pins.size(); ++i) {
      const auto& p = pins[i];
      if (p.visual_embedding.size() != dims.visual) {
        throw DimensionError("pin " + std::to_string(p.signature) + " visual_embedding has dimension " +
                             std::to_string(p.visual_embedding.size()) + ", expected " +
                             std::to_string(dims.visual));
      }
      if (p.text_embedding.size() != dims.text) {
        throw DimensionError("pin " + std::to_string(p.signature) + " text_embedding has dimension " +
                             std::to_string(p.text_embedding.size()) + ", expected " +
                             std::to_string(dims.text));
      }
      if (!pin_pos_.emplace(p.signature, i).second) {
        throw DuplicateIdError("duplicate pin signature " + std::to_string(p.signature));
      }
    }
    for (std::size_t i = 0; i < queries.size(); ++i) query_pos_.emplace(queries[i].text, i);
  }

  bool has_pin(Signature s) const { return pin_pos_.count(s) != 0; }
  const PinRecord& pin(Signature s) const {
    auto it = pin_pos_.find(s);
    if (it == pin_pos_.end()) throw InvalidArgument("unknown pin signature " + std::to_string(s));
    return pins[it->second];
  }
  const QueryRecord* find_query(const std::string& text) const {
    auto it = query_pos_.find(text);
    return it == query_pos_.end() ? nullptr : &queries[it->second];
  }

 private:
  std::unordered_map<Signature, std::size_t> pin_pos_;
  std::unordered_map<std::string, std::size_t> query_pos_;
};

inline Corpus load_corpus(const CorpusManifest& m) {
  Corpus c;
  c.dims = m.dims;
  c.seed = m.seed;
  std::unordered_map<Signature, std::size_t> seen;
  read_jsonl(m.pins, [&](const Json& j, std::size_t line) {
    auto p = pin_from_json(j, m.dims);
    if (auto [it, fresh] = seen.emplace(p.signature, line); !fresh) {
      throw DuplicateIdError("duplicate pin signature " + std::to_string(p.signature) +
                             " (first seen on line " + std::to_string(it->second) + ")");
    }
    c.pins.push_back(std::move(p));
  });
  if (!m.queries.empty()) {
    read_jsonl(m.queries, [&](const Json& j, std::size_t) { c.queries.push_back(query_from_json(j, m.dims)); });
  }
  if (!m.engagement.empty()) {
    read_jsonl(m.engagement, [&](const Json& j, std::size_t) { c.engagement.push_back(engagement_from_json(j)); });
  }
  if (!m.labels.empty()) {
    read_jsonl(m.labels, [&](const Json& j, std::size_t) { c.candidates.push_back(candidate_from_json(j)); });
  }
  c.index();
  return c;
}

inline Corpus load_corpus(const std::filesystem::path& manifest_path) {
  return load_corpus(parse_manifest(manifest_path));
}

/// Writes pins/queries/engagement/labels JSONL plus `manifest.txt` into `dir`.
inline CorpusManifest save_corpus(const Corpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CorpusManifest m;
  m.pins = dir / "pins.jsonl";
  m.queries = dir / "queries.jsonl";
  m.engagement = dir / "engagement.jsonl";
  m.labels = dir / "labels.jsonl";
  m.dims = c.dims;
  m.seed = c.seed;
  write_jsonl(m.pins, c.pins, [](const PinRecord& r) { return to_jsonl(r); });
  write_jsonl(m.queries, c.queries, [](const QueryRecord& r) { return to_jsonl(r); });
  write_jsonl(m.engagement, c.engagement, [](const EngagementRecord& r) { return to_jsonl(r); });
  write_jsonl(m.labels, c.candidates, [](const CandidatePair& r) { return to_jsonl(r); });
  write_text(dir / "manifest.txt", manifest_text(m));
  return m;
}

}  // namespace geoforge
