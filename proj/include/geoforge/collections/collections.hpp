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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "geoforge/ann/hnsw.hpp"
#include "geoforge/core/corpus.hpp"
#include "geoforge/core/error.hpp"
#include "geoforge/core/jsonl.hpp"
#include "geoforge/core/parallel.hpp"
#include "geoforge/core/records.hpp"
#include "geoforge/core/text.hpp"
#include "geoforge/encoders/encoder.hpp"

namespace geoforge::collections {

inline constexpr std::size_t kDefaultMembers = 10;
inline constexpr double kDefaultJudgeThreshold = 0.5;
// Absorbs last-bit rounding so identical texts pass a threshold of 1.
inline constexpr double kScoreTolerance = 1e-12;

struct Member {
  Signature signature = 0;
  double similarity = 0.0;

  friend bool operator==(const Member&, const Member&) = default;
};

struct Collection {
  QueryRecord topic;
  std::vector<Member> members;
  std::string slug;
  std::string embedding_kind;

  std::vector<Signature> signatures() const {
    std::vector<Signature> out;
    for (const auto& m : members) out.push_back(m.signature);
    return out;
  }

  friend bool operator==(const Collection&, const Collection&) = default;
};

inline bool valid_slug(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-')) return false;
  }
  return true;
}

/// Top-k pins for the topic's text encoding, in index similarity order.
inline Collection build_collection(const QueryRecord& topic, const Encoder& encoder, const ann::HnswIndex& index,
                                   std::size_t k = kDefaultMembers) {
  if (index.empty()) throw InvalidArgument("build_collection: index is empty");
  if (encoder.dim() != index.dim()) {
    throw DimensionError("build_collection: encoder dimension " + std::to_string(encoder.dim()) +
                         " does not match index dimension " + std::to_string(index.dim()));
  }
  Collection c;
  c.topic = topic;
  c.slug = slugify(topic.text);
  if (!valid_slug(c.slug)) throw InvalidArgument("build_collection: topic '" + topic.text + "' has an empty slug");
  c.embedding_kind = encoder.name();
  const DenseVector probe = encoder.encode_text(topic.text);
  for (const auto& n : index.search(probe, k)) c.members.push_back({n.id, n.similarity});
  return c;
}

/// Builds one collection per topic across `threads` workers; output order
/// follows the input order.
inline std::vector<Collection> build_collections(const std::vector<QueryRecord>& topics, const Encoder& encoder,
                                                 const ann::HnswIndex& index, std::size_t k, std::size_t threads) {
  std::vector<Collection> out(topics.size());
  parallel_for(topics.size(), threads, [&](std::size_t i) { out[i] = build_collection(topics[i], encoder, index, k); });
  return out;
}

// ---------------------------------------------------------------------------
// Judging

struct JudgeVerdict {
  Signature pin_signature = 0;
  bool satisfied = false;
  double score = 0.0;
};

class Judge {
 public:
  virtual ~Judge() = default;
  virtual JudgeVerdict judge(const PinRecord& pin, const QueryRecord& topic) const = 0;
};

/// Satisfied when cosine(encode_pin(pin), encode_text(topic)) ≥ threshold.
class EmbeddingJudge final : public Judge {
 public:
  EmbeddingJudge(std::shared_ptr<const Encoder> encoder, double threshold = kDefaultJudgeThreshold)
      : encoder_(std::move(encoder)), threshold_(threshold) {
    if (!encoder_) throw InvalidArgument("EmbeddingJudge: encoder required");
  }

  JudgeVerdict judge(const PinRecord& pin, const QueryRecord& topic) const override {
    const double s = cosine(encoder_->encode_pin(pin).span(), encoder_->encode_text(topic.text).span());
    return {pin.signature, s >= threshold_ - kScoreTolerance, s};
  }

  double threshold() const { return threshold_; }

 private:
  std::shared_ptr<const Encoder> encoder_;
  double threshold_;
};

/// Verdicts produced out of process, one JSON object per line:
/// {"topic": ..., "signature": ..., "satisfied": ..., "score": ...}.
class FileJudge final : public Judge {
 public:
  explicit FileJudge(const std::filesystem::path& path) {
    read_jsonl(path, [&](const Json& j, std::size_t) {
      const auto topic = detail::require<std::string>(j, "topic");
      const auto sig = detail::require<Signature>(j, "signature");
      JudgeVerdict v{sig, detail::require<bool>(j, "satisfied"), j.value("score", 0.0)};
      if (!std::isfinite(v.score)) throw InvalidArgument("verdict score must be finite");
      if (!verdicts_.emplace(std::make_pair(topic, sig), v).second) {
        throw DuplicateIdError("duplicate verdict for topic '" + topic + "' and pin " + std::to_string(sig));
      }
    });
  }

  JudgeVerdict judge(const PinRecord& pin, const QueryRecord& topic) const override {
    auto it = verdicts_.find({topic.text, pin.signature});
    if (it == verdicts_.end()) {
      throw InvalidArgument("no verdict for topic '" + topic.text + "' and pin " + std::to_string(pin.signature));
    }
    return it->second;
  }

 private:
  std::map<std::pair<std::string, Signature>, JudgeVerdict> verdicts_;
};

struct IntentResult {
  double rate = 0.0;
  std::vector<JudgeVerdict> verdicts;
};

/// Unweighted mean of the member verdicts; an empty collection rates 0.
inline IntentResult intent_satisfying_rate(const Collection& c, const Corpus& corpus, const Judge& judge) {
  IntentResult r;
  std::size_t ok = 0;
  for (const auto& m : c.members) {
    if (!corpus.has_pin(m.signature)) {
      throw InvalidArgument("collection '" + c.slug + "' member " + std::to_string(m.signature) +
                            " is not in the corpus");
    }
    r.verdicts.push_back(judge.judge(corpus.pin(m.signature), c.topic));
    ok += r.verdicts.back().satisfied;
  }
  r.rate = c.members.empty() ? 0.0 : double(ok) / double(c.members.size());
  return r;
}

// ---------------------------------------------------------------------------
// Artifacts

inline std::string to_jsonl(const Collection& c) {
  std::string out = "{";
  detail::append_key(out, "slug", true);
  detail::append_string(out, c.slug);
  detail::append_key(out, "topic");
  detail::append_string(out, c.topic.text);
  detail::append_key(out, "category");
  detail::append_string(out, to_string(c.topic.category));
  detail::append_key(out, "embedding_kind");
  detail::append_string(out, c.embedding_kind);
  detail::append_key(out, "members");
  out += '[';
  for (std::size_t i = 0; i < c.members.size(); ++i) {
    if (i) out += ',';
    out += "{\"signature\":" + std::to_string(c.members[i].signature) + ",\"similarity\":";
    detail::append_double(out, c.members[i].similarity);
    out += '}';
  }
  out += "]}";
  return out;
}

inline Collection collection_from_json(const Json& j) {
  Collection c;
  c.slug = detail::require<std::string>(j, "slug");
  if (!valid_slug(c.slug)) throw InvalidArgument("invalid slug '" + c.slug + "'");
  c.topic.text = detail::require<std::string>(j, "topic");
  c.topic.category = parse_category(j.value("category", std::string("description")));
  c.embedding_kind = detail::require<std::string>(j, "embedding_kind");
  const auto& members = j.at("members");
  if (!members.is_array()) throw InvalidArgument("members must be an array");
  for (const auto& m : members) {
    Member mem{detail::require<Signature>(m, "signature"), detail::require<double>(m, "similarity")};
    for (const auto& prev : c.members) {
      if (prev.signature == mem.signature) {
        throw DuplicateIdError("collection '" + c.slug + "' repeats member " + std::to_string(mem.signature));
      }
    }
    c.members.push_back(mem);
  }
  return c;
}

inline std::vector<Collection> load_collections(const std::filesystem::path& path) {
  std::vector<Collection> out;
  read_jsonl(path, [&](const Json& j, std::size_t) { out.push_back(collection_from_json(j)); });
  return out;
}

inline std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string collection_page(const Collection& c) {
  const auto title = html_escape(c.topic.text);
  std::string html = "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>" + title +
                     "</title>\n</head>\n<body>\n<h1>" + title + "</h1>\n<ul>\n";
  for (const auto& m : c.members) {
    const auto sig = std::to_string(m.signature);
    html += "<li><a href=\"/pin/" + sig + "\">" + sig + "</a></li>\n";
  }
  html += "</ul>\n</body>\n</html>\n";
  return html;
}

/// Writes <dir>/<slug>.html for every collection.
inline void write_collection_pages(const std::vector<Collection>& cs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& c : cs) write_text(dir / (c.slug + ".html"), collection_page(c));
}

}  // namespace geoforge::collections
