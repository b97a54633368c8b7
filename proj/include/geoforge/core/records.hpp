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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoforge/core/error.hpp"
#include "geoforge/core/text.hpp"
#include "geoforge/core/vector_math.hpp"

namespace geoforge {

using Json = nlohmann::json;
using Signature = std::uint64_t;

/// Embedding dimensions shared by every record in a corpus.
struct Dims {
  std::size_t visual = 1028;
  std::size_t text = 768;
  std::size_t ranker_output = 128;

  std::size_t pin_features() const { return visual + text + 1; }
  std::size_t query_features() const { return text + 1; }
};

enum class QueryCategory { kDescription, kStyleDetail, kUseCase };
inline constexpr QueryCategory kAllCategories[] = {
    QueryCategory::kDescription, QueryCategory::kStyleDetail, QueryCategory::kUseCase};

inline std::string_view to_string(QueryCategory c) {
  switch (c) {
    case QueryCategory::kDescription: return "Description";
    case QueryCategory::kStyleDetail: return "StyleDetail";
    case QueryCategory::kUseCase: return "UseCase";
  }
  return "?";
}

inline QueryCategory parse_category(std::string_view s) {
  if (s == "Description") return QueryCategory::kDescription;
  if (s == "StyleDetail") return QueryCategory::kStyleDetail;
  if (s == "UseCase") return QueryCategory::kUseCase;
  throw InvalidArgument("unknown query category '" + std::string(s) + "'");
}

enum class PairSource { kSearchConsole, kSynthetic, kHardNegative };

inline std::string_view to_string(PairSource s) {
  switch (s) {
    case PairSource::kSearchConsole: return "SearchConsole";
    case PairSource::kSynthetic: return "Synthetic";
    case PairSource::kHardNegative: return "HardNegative";
  }
  return "?";
}

inline PairSource parse_source(std::string_view s) {
  if (s == "SearchConsole") return PairSource::kSearchConsole;
  if (s == "Synthetic") return PairSource::kSynthetic;
  if (s == "HardNegative") return PairSource::kHardNegative;
  throw InvalidArgument("unknown pair source '" + std::string(s) + "'");
}

struct PinRecord {
  Signature signature = 0;
  std::vector<float> visual_embedding;
  std::vector<float> text_embedding;
  float perception_score = 0.0f;
  std::string title;
  std::string description;
  std::optional<std::uint64_t> board_id;
  std::string category;
  std::string language = "en";

  friend bool operator==(const PinRecord&, const PinRecord&) = default;
};

struct QueryRecord {
  std::string text;
  QueryCategory category = QueryCategory::kDescription;
  std::string language = "en";
  std::optional<std::vector<float>> embedding;
  PairSource source = PairSource::kSearchConsole;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

struct EngagementRecord {
  std::string query_text;
  Signature pin_signature = 0;
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
  double avg_position = 1.0;

  /// Undefined without impressions.
  std::optional<double> ctr() const {
    if (impressions == 0) return std::nullopt;
    return double(clicks) / double(impressions);
  }

  friend bool operator==(const EngagementRecord&, const EngagementRecord&) = default;
};

/// An unlabeled (pin, query) pair with its navboost coverage.
struct CandidatePair {
  Signature pin_signature = 0;
  std::string query_text;
  double navboost_coverage = 0.0;
  PairSource source = PairSource::kSearchConsole;

  friend bool operator==(const CandidatePair&, const CandidatePair&) = default;
};

struct LabeledPair {
  Signature pin_signature = 0;
  QueryRecord query;
  int label = 1;
  double navboost_coverage = 0.0;
  PairSource source = PairSource::kSearchConsole;

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

// ---------------------------------------------------------------------------
// JSONL encoding. Floats are written in shortest round-trip form.

namespace detail {

inline void append_float(std::string& out, float v) {
  if (!std::isfinite(v)) throw NumericError("cannot serialize non-finite value");
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

inline void append_double(std::string& out, double v) {
  if (!std::isfinite(v)) throw NumericError("cannot serialize non-finite value");
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

inline void append_array(std::string& out, const std::vector<float>& v) {
  out.push_back('[');
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    append_float(out, v[i]);
  }
  out.push_back(']');
}

inline void append_key(std::string& out, std::string_view key, bool first = false) {
  if (!first) out.push_back(',');
  out.push_back('"');
  out.append(key);
  out.append("\":");
}

inline void append_string(std::string& out, std::string_view s) { out += Json(s).dump(); }

template <typename T>
T require(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) throw InvalidArgument(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("field '") + key + "': " + e.what());
  }
}

inline std::vector<float> read_vector(const Json& j, const char* key, std::size_t expected) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array()) throw InvalidArgument(std::string("missing array '") + key + "'");
  if (it->size() != expected) {
    throw DimensionError(std::string("field '") + key + "' has dimension " +
                         std::to_string(it->size()) + ", expected " + std::to_string(expected));
  }
  std::vector<float> v;
  v.reserve(expected);
  for (const auto& x : *it) {
    if (!x.is_number()) throw InvalidArgument(std::string("non-numeric entry in '") + key + "'");
    v.push_back(static_cast<float>(x.get<double>()));
  }
  return v;
}

}  // namespace detail

inline std::string to_jsonl(const PinRecord& p) {
  std::string out = "{";
  detail::append_key(out, "signature", true);
  out += std::to_string(p.signature);
  detail::append_key(out, "visual_embedding");
  detail::append_array(out, p.visual_embedding);
  detail::append_key(out, "text_embedding");
  detail::append_array(out, p.text_embedding);
  detail::append_key(out, "perception_score");
  detail::append_float(out, p.perception_score);
  detail::append_key(out, "title");
  detail::append_string(out, p.title);
  detail::append_key(out, "description");
  detail::append_string(out, p.description);
  detail::append_key(out, "board_id");
  out += p.board_id ? std::to_string(*p.board_id) : "null";
  detail::append_key(out, "category");
  detail::append_string(out, p.category);
  detail::append_key(out, "language");
  detail::append_string(out, p.language);
  out.push_back('}');
  return out;
}

inline PinRecord pin_from_json(const Json& j, const Dims& dims) {
  PinRecord p;
  p.signature = detail::require<Signature>(j, "signature");
  p.visual_embedding = detail::read_vector(j, "visual_embedding", dims.visual);
  p.text_embedding = detail::read_vector(j, "text_embedding", dims.text);
  p.perception_score = static_cast<float>(detail::require<double>(j, "perception_score"));
  if (!(p.perception_score >= 0.0f && p.perception_score <= 1.0f)) {
    throw InvalidArgument("perception_score outside [0,1]");
  }
  p.title = j.value("title", std::string());
  p.description = j.value("description", std::string());
  if (auto it = j.find("board_id"); it != j.end() && !it->is_null()) {
    p.board_id = it->get<std::uint64_t>();
  }
  p.category = j.value("category", std::string());
  p.language = j.value("language", std::string("en"));
  return p;
}

inline std::string to_jsonl(const QueryRecord& q) {
  std::string out = "{";
  detail::append_key(out, "text", true);
  detail::append_string(out, q.text);
  detail::append_key(out, "category");
  detail::append_string(out, to_string(q.category));
  detail::append_key(out, "language");
  detail::append_string(out, q.language);
  detail::append_key(out, "source");
  detail::append_string(out, to_string(q.source));
  if (q.embedding) {
    detail::append_key(out, "embedding");
    detail::append_array(out, *q.embedding);
  }
  out.push_back('}');
  return out;
}

inline QueryRecord query_from_json(const Json& j, const Dims& dims) {
  QueryRecord q;
  q.text = trim(detail::require<std::string>(j, "text"));
  if (q.text.empty()) throw InvalidArgument("query text is empty");
  q.category = parse_category(detail::require<std::string>(j, "category"));
  q.language = j.value("language", std::string("en"));
  q.source = parse_source(j.value("source", std::string("SearchConsole")));
  if (auto it = j.find("embedding"); it != j.end() && !it->is_null()) {
    q.embedding = detail::read_vector(j, "embedding", dims.text);
  }
  return q;
}

inline std::string to_jsonl(const EngagementRecord& e) {
  std::string out = "{";
  detail::append_key(out, "query_text", true);
  detail::append_string(out, e.query_text);
  detail::append_key(out, "pin_signature");
  out += std::to_string(e.pin_signature);
  detail::append_key(out, "impressions");
  out += std::to_string(e.impressions);
  detail::append_key(out, "clicks");
  out += std::to_string(e.clicks);
  detail::append_key(out, "avg_position");
  detail::append_double(out, e.avg_position);
  out.push_back('}');
  return out;
}

inline EngagementRecord engagement_from_json(const Json& j) {
  EngagementRecord e;
  e.query_text = trim(detail::require<std::string>(j, "query_text"));
  e.pin_signature = detail::require<Signature>(j, "pin_signature");
  e.impressions = detail::require<std::uint64_t>(j, "impressions");
  e.clicks = detail::require<std::uint64_t>(j, "clicks");
  e.avg_position = detail::require<double>(j, "avg_position");
  if (e.clicks > e.impressions) throw InvalidArgument("clicks exceed impressions");
  if (!(e.avg_position >= 1.0)) throw InvalidArgument("avg_position must be >= 1");
  return e;
}

inline std::string to_jsonl(const CandidatePair& c) {
  std::string out = "{";
  detail::append_key(out, "pin_signature", true);
  out += std::to_string(c.pin_signature);
  detail::append_key(out, "query_text");
  detail::append_string(out, c.query_text);
  detail::append_key(out, "navboost_coverage");
  detail::append_double(out, c.navboost_coverage);
  detail::append_key(out, "source");
  detail::append_string(out, to_string(c.source));
  out.push_back('}');
  return out;
}

inline CandidatePair candidate_from_json(const Json& j) {
  CandidatePair c;
  c.pin_signature = detail::require<Signature>(j, "pin_signature");
  c.query_text = trim(detail::require<std::string>(j, "query_text"));
  c.navboost_coverage = detail::require<double>(j, "navboost_coverage");
  if (!(c.navboost_coverage >= 0.0 && c.navboost_coverage <= 1.0)) {
    throw InvalidArgument("navboost_coverage outside [0,1]");
  }
  c.source = parse_source(j.value("source", std::string("SearchConsole")));
  return c;
}

inline std::string to_jsonl(const LabeledPair& l) {
  std::string out = "{";
  detail::append_key(out, "pin_signature", true);
  out += std::to_string(l.pin_signature);
  detail::append_key(out, "query");
  out += to_jsonl(l.query);
  detail::append_key(out, "label");
  out += std::to_string(l.label);
  detail::append_key(out, "navboost_coverage");
  detail::append_double(out, l.navboost_coverage);
  detail::append_key(out, "source");
  detail::append_string(out, to_string(l.source));
  out.push_back('}');
  return out;
}

inline LabeledPair labeled_pair_from_json(const Json& j, const Dims& dims) {
  LabeledPair l;
  l.pin_signature = detail::require<Signature>(j, "pin_signature");
  auto q = j.find("query");
  if (q == j.end() || !q->is_object()) throw InvalidArgument("missing object 'query'");
  l.query = query_from_json(*q, dims);
  l.label = detail::require<int>(j, "label");
  if (l.label != 1 && l.label != -1) throw InvalidArgument("label must be +1 or -1");
  l.navboost_coverage = detail::require<double>(j, "navboost_coverage");
  if (!(l.navboost_coverage >= 0.0 && l.navboost_coverage <= 1.0)) {
    throw InvalidArgument("navboost_coverage outside [0,1]");
  }
  l.source = parse_source(detail::require<std::string>(j, "source"));
  return l;
}

}  // namespace geoforge
