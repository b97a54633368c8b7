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

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geoforge/agent/agent.hpp"
#include "geoforge/ann/hnsw.hpp"
#include "geoforge/collections/collections.hpp"
#include "geoforge/core/corpus.hpp"
#include "geoforge/core/error.hpp"
#include "geoforge/core/jsonl.hpp"
#include "geoforge/core/parallel.hpp"
#include "geoforge/core/synthetic.hpp"
#include "geoforge/core/text.hpp"
#include "geoforge/curation/curation.hpp"
#include "geoforge/encoders/models.hpp"
#include "geoforge/linkgraph/linkgraph.hpp"
#include "geoforge/ranker/vase.hpp"

namespace geoforge::pipeline {

using ranker::PinFeatures;
using ranker::QueryFeatures;
using ranker::RankedAnnotation;
using ranker::RankerModel;
using ranker::RankerTriplet;
using ranker::TowerConfig;

enum class Stage { kCorpus, kCurate, kEncode, kIndex, kRank, kCollect, kLink, kAgent, kEval };

inline constexpr Stage kAllStages[] = {Stage::kCorpus, Stage::kCurate,  Stage::kEncode,
                                       Stage::kIndex,  Stage::kRank,    Stage::kCollect,
                                       Stage::kLink,   Stage::kAgent,   Stage::kEval};

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kCorpus: return "corpus";
    case Stage::kCurate: return "curate";
    case Stage::kEncode: return "encode";
    case Stage::kIndex: return "index";
    case Stage::kRank: return "rank";
    case Stage::kCollect: return "collect";
    case Stage::kLink: return "link";
    case Stage::kAgent: return "agent";
    case Stage::kEval: return "eval";
  }
  return "?";
}

inline Stage parse_stage(std::string_view s) {
  for (auto st : kAllStages) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

/// Upstream stages whose artifacts a stage reads.
inline std::vector<Stage> dependencies(Stage s) {
  switch (s) {
    case Stage::kCorpus: return {};
    case Stage::kCurate: return {Stage::kCorpus};
    case Stage::kEncode: return {Stage::kCorpus};
    case Stage::kIndex: return {Stage::kCorpus, Stage::kEncode};
    case Stage::kRank: return {Stage::kCorpus, Stage::kCurate};
    case Stage::kCollect: return {Stage::kCorpus, Stage::kEncode, Stage::kIndex};
    case Stage::kLink: return {Stage::kCorpus, Stage::kEncode, Stage::kCollect, Stage::kRank};
    case Stage::kAgent: return {Stage::kCorpus, Stage::kEncode, Stage::kIndex};
    case Stage::kEval: return {};
  }
  return {};
}

// Artifact paths relative to the output directory.
namespace paths {
inline constexpr const char* kManifest = "corpus/manifest.txt";
inline constexpr const char* kTrends = "corpus/trends.jsonl";
inline constexpr const char* kLabeledPairs = "curated/labeled_pairs.jsonl";
inline constexpr const char* kEncoder = "encoder/encoder.ckpt";
inline constexpr const char* kEncoderLog = "encoder/training_log.csv";
inline constexpr const char* kIndex = "index/pins.hnsw";
inline constexpr const char* kRanker = "ranker/ranker.ckpt";
inline constexpr const char* kRankerLog = "ranker/training_log.csv";
inline constexpr const char* kCollections = "collections/collections.jsonl";
inline constexpr const char* kPages = "collections/pages";
inline constexpr const char* kGraph = "link/graph.jsonl";
inline constexpr const char* kLinkReport = "link/report.json";
inline constexpr const char* kSitemap = "link/sitemap.xml";
inline constexpr const char* kTrendQueries = "agent/trend_queries.jsonl";
inline constexpr const char* kTrace = "agent/trace.jsonl";
inline constexpr const char* kLongMemory = "agent/long_memory.json";
inline constexpr const char* kReports = "reports";
inline constexpr const char* kReport = "report.json";
}  // namespace paths

enum class LinkMode { kEnabled, kControl, kAblation };

inline std::string_view to_string(LinkMode m) {
  switch (m) {
    case LinkMode::kEnabled: return "enabled";
    case LinkMode::kControl: return "control";
    case LinkMode::kAblation: return "ablation";
  }
  return "?";
}

inline LinkMode parse_link_mode(std::string_view s) {
  for (auto m : {LinkMode::kEnabled, LinkMode::kControl, LinkMode::kAblation}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("link mode must be enabled, control or ablation, got '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
  std::filesystem::path out = "geo_forge_out";
  std::filesystem::path manifest;  // empty: the generated corpus under out/corpus
  std::uint64_t seed = 42;
  std::vector<Stage> stages;  // empty: every stage
  std::size_t threads = 0;    // 0: GEO_FORGE_THREADS or hardware concurrency

  std::size_t corpus_pins = 1000;
  curation::CurationOptions curate;
  EncoderConfig encoder;
  LossKind loss = LossKind::kPinClip;
  ann::HnswParams index;
  std::size_t recall_queries = 100;
  double ranker_width = 0.125;
  TowerConfig ranker;  // dims are filled from the corpus
  std::size_t collection_size = collections::kDefaultMembers;
  double judge_threshold = collections::kDefaultJudgeThreshold;
  std::filesystem::path topics;
  LinkMode link_mode = LinkMode::kEnabled;
  std::string base_url = "https://example.com";
  std::size_t annotations_per_pin = 3;
  agent::AgentConfig agent;
  agent::LookupOptions lookup;
  std::filesystem::path trends;
  std::filesystem::path memory_in;

  std::filesystem::path manifest_path() const { return manifest.empty() ? out / paths::kManifest : manifest; }
  std::filesystem::path trends_path() const {
    if (!trends.empty()) return trends;
    return manifest.empty() ? out / paths::kTrends : manifest.parent_path() / "trends.jsonl";
  }
  std::size_t worker_threads() const { return threads ? threads : worker_count(); }

  /// Applies one key=value setting; unknown keys and bad values are ConfigErrors.
  void set(const std::string& key, const std::string& value);

  static std::vector<std::string> keys();
};

namespace detail {

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    const auto x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  const auto x = parse_u64(key, v);
  if (x == 0) throw ConfigError("config key '" + key + "' must be positive");
  return std::size_t(x);
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto end = std::min(v.find(',', start), v.size());
    if (auto item = trim(std::string_view(v).substr(start, end - start)); !item.empty()) out.push_back(item);
    start = end + 1;
  }
  return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto count = [](std::size_t PipelineConfig::*field) {
      return [field](PipelineConfig& c, const std::string& k, const std::string& v) { c.*field = parse_count(k, v); };
    };
    t["out"] = [](PipelineConfig& c, const std::string&, const std::string& v) { c.out = v; };
    t["manifest"] = [](PipelineConfig& c, const std::string&, const std::string& v) { c.manifest = v; };
    t["seed"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); };
    t["stages"] = [](PipelineConfig& c, const std::string&, const std::string& v) {
      c.stages.clear();
      for (const auto& s : split_list(v)) c.stages.push_back(parse_stage(s));
      if (c.stages.empty()) throw ConfigError("stages list is empty");
    };
    t["threads"] = count(&PipelineConfig::threads);
    t["corpus.pins"] = count(&PipelineConfig::corpus_pins);
    t["curate.top_n"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.curate.top_n = parse_count(k, v); };
    t["curate.dedup_threshold"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.curate.dedup_threshold = parse_real(k, v);
    };
    t["curate.neg_per_pos"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.curate.label.neg_per_pos = parse_count(k, v);
    };
    t["encoder.loss"] = [](PipelineConfig& c, const std::string&, const std::string& v) {
      try {
        c.loss = parse_loss_kind(v);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    };
    t["encoder.steps"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.encoder.steps = parse_count(k, v); };
    t["encoder.batch_size"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.encoder.batch_size = parse_count(k, v);
    };
    t["encoder.learning_rate"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.encoder.learning_rate = parse_real(k, v);
    };
    t["encoder.temperature"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.encoder.temperature = parse_real(k, v);
    };
    t["encoder.output_dim"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.encoder.output_dim = parse_count(k, v);
    };
    t["encoder.hidden"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.encoder.hidden.clear();
      for (const auto& w : split_list(v)) c.encoder.hidden.push_back(parse_count(k, w));
    };
    t["index.m"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.index.M = parse_count(k, v); };
    t["index.ef_construction"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.index.ef_construction = parse_count(k, v);
    };
    t["index.ef_search"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.index.ef_search = parse_count(k, v);
    };
    t["index.recall_queries"] = count(&PipelineConfig::recall_queries);
    t["ranker.width"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.ranker_width = parse_real(k, v);
      if (!(c.ranker_width > 0.0)) throw ConfigError("ranker.width must be positive");
    };
    t["ranker.epochs"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.ranker.epochs = parse_count(k, v); };
    t["ranker.learning_rate"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.ranker.learning_rate = parse_real(k, v);
    };
    t["ranker.batch_size"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.ranker.batch_size = parse_count(k, v);
    };
    t["ranker.margin"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.ranker.margin = parse_real(k, v); };
    t["ranker.dropout"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.ranker.dropout = parse_real(k, v); };
    t["collect.k"] = count(&PipelineConfig::collection_size);
    t["collect.judge_threshold"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.judge_threshold = parse_real(k, v);
    };
    t["collect.topics"] = [](PipelineConfig& c, const std::string&, const std::string& v) { c.topics = v; };
    t["link.mode"] = [](PipelineConfig& c, const std::string&, const std::string& v) { c.link_mode = parse_link_mode(v); };
    t["link.base_url"] = [](PipelineConfig& c, const std::string&, const std::string& v) {
      try {
        c.base_url = linkgraph::normalize_base_url(v);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    };
    t["link.annotations_per_pin"] = count(&PipelineConfig::annotations_per_pin);
    t["agent.regions"] = [](PipelineConfig& c, const std::string&, const std::string& v) { c.agent.regions = split_list(v); };
    t["agent.timespans"] = [](PipelineConfig& c, const std::string&, const std::string& v) { c.agent.timespans = split_list(v); };
    t["agent.filter_threshold"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.agent.filter_threshold = parse_real(k, v);
      if (!(c.agent.filter_threshold >= 0.0 && c.agent.filter_threshold <= 1.0)) {
        throw ConfigError("agent.filter_threshold must lie in [0, 1]");
      }
    };
    t["agent.velocity_floor"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.agent.velocity_floor = parse_real(k, v);
    };
    t["agent.expansions"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.agent.expansions_per_trend = parse_count(k, v);
    };
    t["agent.min_count"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.lookup.min_count = std::size_t(parse_u64(k, v));
    };
    t["agent.relevance_floor"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.lookup.relevance_floor = parse_real(k, v);
    };
    t["agent.lookup_ef"] = [](PipelineConfig& c, const std::string& k, const std::string& v) { c.lookup.ef = parse_count(k, v); };
    t["agent.trends"] = [](PipelineConfig& c, const std::string&, const std::string& v) { c.trends = v; };
    t["agent.memory_in"] = [](PipelineConfig& c, const std::string&, const std::string& v) { c.memory_in = v; };
    return t;
  }();
  return table;
}

}  // namespace detail

inline void PipelineConfig::set(const std::string& key, const std::string& value) {
  const auto& t = detail::setters();
  auto it = t.find(key);
  if (it == t.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, trim(value));
}

inline std::vector<std::string> PipelineConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : detail::setters()) out.push_back(k);
  return out;
}

/// Applies a key=value file; '#' starts a comment line, blank lines are skipped.
inline void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      cfg.set(trim(std::string_view(t).substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// Link modes

/// Ranker-selected annotations: for every pin, the top-k collection topics.
inline std::vector<linkgraph::Annotation> ranker_annotations(const RankerModel& model, const Corpus& corpus,
                                                             const std::vector<collections::Collection>& cols,
                                                             std::size_t per_pin) {
  if (cols.empty() || corpus.pins.empty()) return {};
  std::vector<QueryFeatures> qs;
  for (const auto& c : cols) {
    qs.push_back(QueryFeatures::from(c.topic.text, hashed_text_embedding(c.topic.text, corpus.dims.text).values));
  }
  std::vector<PinFeatures> ps;
  for (const auto& p : corpus.pins) ps.push_back(PinFeatures::from(p));
  const Matrix scores = embed_pins(model, ps) * embed_queries(model, qs).transpose();
  std::vector<linkgraph::Annotation> out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::vector<RankedAnnotation> scored;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      scored.push_back({cols[j].topic.text, scores(Eigen::Index(i), Eigen::Index(j))});
    }
    for (const auto& a : order_annotations(std::move(scored), per_pin)) out.push_back({corpus.pins[i].signature, a.text});
  }
  return out;
}

/// Control annotations: each pin's k nearest corpus queries in encoder space,
/// kept verbatim so only exact topic matches resolve to a collection.
inline std::vector<linkgraph::Annotation> nearest_query_annotations(const Encoder& encoder, const Corpus& corpus,
                                                                    std::size_t per_pin) {
  std::vector<DenseVector> qs;
  for (const auto& q : corpus.queries) qs.push_back(encoder.encode_text(q.text));
  std::vector<linkgraph::Annotation> out;
  for (const auto& p : corpus.pins) {
    const auto pe = encoder.encode_pin(p);
    std::vector<RankedAnnotation> scored;
    for (std::size_t j = 0; j < qs.size(); ++j) scored.push_back({corpus.queries[j].text, dot(pe.span(), qs[j].span())});
    for (const auto& a : order_annotations(std::move(scored), per_pin)) out.push_back({p.signature, a.text});
  }
  return out;
}

struct LinkOutcome {
  LinkMode mode = LinkMode::kEnabled;
  linkgraph::BuildResult build;
  linkgraph::AuthorityScores scores;

  Json summary() const {
    return {{"mode", to_string(mode)},
            {"mean_collection_authority", linkgraph::mean_collection_authority(build.graph, scores)},
            {"orphan_pins", linkgraph::orphan_pins(build.graph)},
            {"resolved_annotations", build.report.resolved},
            {"dangling_annotations", build.report.dangling.size()},
            {"edges", build.graph.edge_count()}};
  }
};

inline LinkOutcome link_mode(LinkMode mode, const Corpus& corpus, const std::vector<collections::Collection>& cols,
                             const RankerModel* ranker, const Encoder* encoder, std::size_t per_pin) {
  std::vector<linkgraph::Annotation> annotations;
  if (mode == LinkMode::kEnabled) {
    if (!ranker) throw DependencyError("link mode 'enabled' needs a ranker");
    annotations = ranker_annotations(*ranker, corpus, cols, per_pin);
  } else if (mode == LinkMode::kControl) {
    if (!encoder) throw DependencyError("link mode 'control' needs an encoder");
    annotations = nearest_query_annotations(*encoder, corpus, per_pin);
  }
  std::vector<Signature> pins;
  for (const auto& p : corpus.pins) pins.push_back(p.signature);
  LinkOutcome o;
  o.mode = mode;
  o.build = linkgraph::build_link_graph(annotations, cols, pins);
  o.scores = linkgraph::pagerank(o.build.graph);
  return o;
}

// ---------------------------------------------------------------------------
// Ranker data

struct RankerData {
  std::vector<RankerTriplet> train;
  std::vector<RankerTriplet> eval;
};

/// Pairs each positive with a negative of the same pin (cycling when a pin
/// has fewer negatives) and holds out about a fifth of the pins for eval.
inline RankerData ranker_triplets(const Corpus& corpus, const std::vector<LabeledPair>& pairs, std::uint64_t seed) {
  std::map<Signature, std::pair<std::vector<const QueryRecord*>, std::vector<const QueryRecord*>>> by_pin;
  for (const auto& p : pairs) {
    auto& slot = by_pin[p.pin_signature];
    (p.label > 0 ? slot.first : slot.second).push_back(&p.query);
  }
  auto features = [&](const QueryRecord& q) {
    auto emb = q.embedding && q.embedding->size() == corpus.dims.text ? *q.embedding
                                                                       : hashed_text_embedding(q.text, corpus.dims.text).values;
    return QueryFeatures::from(q.text, std::move(emb));
  };
  RankerData d;
  for (const auto& [sig, slot] : by_pin) {
    const auto& [pos, neg] = slot;
    if (pos.empty() || neg.empty() || !corpus.has_pin(sig)) continue;
    const auto pin = PinFeatures::from(corpus.pin(sig));
    auto& dst = derive_seed(seed, sig) % 5 == 0 ? d.eval : d.train;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      const auto* n = neg[i % neg.size()];
      if (n->text == pos[i]->text) continue;
      dst.push_back({pin, features(*pos[i]), features(*n)});
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Running stages

struct StageResult {
  Stage stage = Stage::kCorpus;
  enum class Status { kOk, kFailed, kSkipped } status = Status::kOk;
  std::string error;
  Json metrics = Json::object();
  std::map<std::string, std::string> artifacts;  // relative path -> checksum
  double seconds = 0.0;

  std::string_view status_name() const {
    return status == Status::kOk ? "ok" : status == Status::kFailed ? "failed" : "skipped";
  }

  /// Deterministic form: no timings.
  Json to_json() const {
    Json j = {{"stage", to_string(stage)}, {"status", status_name()}, {"metrics", metrics}, {"artifacts", artifacts}};
    if (!error.empty()) j["error"] = error;
    return j;
  }
};

struct PipelineReport {
  std::vector<StageResult> stages;

  bool ok() const {
    return std::all_of(stages.begin(), stages.end(), [](const auto& s) { return s.status == StageResult::Status::kOk; });
  }
  const StageResult* find(Stage s) const {
    for (const auto& r : stages) {
      if (r.stage == s) return &r;
    }
    return nullptr;
  }
};

namespace detail {

/// Loaded inputs shared by the stages of one run.
struct Context {
  const PipelineConfig& cfg;
  std::shared_ptr<const Corpus> corpus;

  std::filesystem::path at(const char* rel) const { return cfg.out / rel; }

  void require(const char* rel, Stage producer) const {
    if (!std::filesystem::exists(at(rel))) {
      throw DependencyError("missing artifact " + at(rel).string() + " (produced by stage '" +
                            std::string(to_string(producer)) + "')");
    }
  }

  const std::shared_ptr<const Corpus>& load_corpus() {
    if (!corpus) {
      const auto m = cfg.manifest_path();
      if (!std::filesystem::exists(m)) {
        throw DependencyError("missing artifact " + m.string() + " (produced by stage 'corpus')");
      }
      corpus = std::make_shared<const Corpus>(geoforge::load_corpus(m));
    }
    return corpus;
  }

  std::shared_ptr<const Encoder> load_encoder() const {
    require(paths::kEncoder, Stage::kEncode);
    return geoforge::load_encoder(at(paths::kEncoder));
  }

  std::shared_ptr<const ann::HnswIndex> load_index() const {
    require(paths::kIndex, Stage::kIndex);
    return std::make_shared<const ann::HnswIndex>(ann::HnswIndex::load(at(paths::kIndex)));
  }
};

inline void record(StageResult& r, const Context& ctx, const std::filesystem::path& file) {
  auto rel = std::filesystem::relative(file, ctx.cfg.out).generic_string();
  r.artifacts[rel] = file_checksum(file.string());
}

inline void write(StageResult& r, const Context& ctx, const char* rel, const std::string& text) {
  const auto p = ctx.at(rel);
  std::filesystem::create_directories(p.parent_path());
  write_text(p, text);
  record(r, ctx, p);
}

inline void write(StageResult& r, const Context& ctx, const char* rel, const std::vector<std::string>& lines) {
  const auto p = ctx.at(rel);
  std::filesystem::create_directories(p.parent_path());
  write_lines(p, lines);
  record(r, ctx, p);
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!trim(line).empty()) out.push_back(line);
  }
  return out;
}

inline void run_corpus(StageResult& r, Context& ctx) {
  if (!ctx.cfg.manifest.empty()) {
    throw ConfigError("stage 'corpus' generates a corpus and cannot be combined with an explicit manifest");
  }
  synthetic::GeneratorConfig g;
  g.num_pins = ctx.cfg.corpus_pins;
  g.seed = ctx.cfg.seed;
  const auto corpus = synthetic::generate_corpus(g);
  const auto dir = ctx.at(paths::kManifest).parent_path();
  const auto m = save_corpus(corpus, dir);
  for (const auto& f : {m.pins, m.queries, m.engagement, m.labels, dir / "manifest.txt"}) record(r, ctx, f);
  write(r, ctx, paths::kTrends, agent::trends_jsonl(agent::synthetic_trend_feed(ctx.cfg.seed)));
  ctx.corpus.reset();
  r.metrics = {{"pins", corpus.pins.size()},
               {"queries", corpus.queries.size()},
               {"engagement", corpus.engagement.size()},
               {"candidates", corpus.candidates.size()}};
}

inline void run_curate(StageResult& r, Context& ctx) {
  const auto corpus = ctx.load_corpus();
  const auto result = curation::curate(*corpus, derive_seed(ctx.cfg.seed, 0x51), ctx.cfg.curate);
  std::vector<LabeledPair> positives;
  for (const auto& p : result.pairs) {
    if (p.label > 0) positives.push_back(p);
  }
  write(r, ctx, paths::kLabeledPairs, [&] {
    std::vector<std::string> lines;
    for (const auto& p : result.pairs) lines.push_back(to_jsonl(p));
    return lines;
  }());
  r.metrics = result.report.to_json();
  if (!positives.empty()) {
    const auto sample = curation::stratify_sample(positives, curation::CategoryMix{}, positives.size(),
                                                  derive_seed(ctx.cfg.seed, 0x52));
    r.metrics["stratified_sample"] = {
        {"Description", sample.counts[0]}, {"StyleDetail", sample.counts[1]}, {"UseCase", sample.counts[2]}};
  }
}

inline void run_encode(StageResult& r, Context& ctx) {
  const auto corpus = ctx.load_corpus();
  const auto t = train_encoder(ctx.cfg.encoder, *corpus, ctx.cfg.loss, derive_seed(ctx.cfg.seed, 0x53));
  const auto p = ctx.at(paths::kEncoder);
  std::filesystem::create_directories(p.parent_path());
  encoder_checkpoint(*t.model).save(p);
  record(r, ctx, p);
  write(r, ctx, paths::kEncoderLog, training_log_csv(t.log));
  r.metrics = {{"loss", to_string(ctx.cfg.loss)},
               {"steps", ctx.cfg.encoder.steps},
               {"output_dim", t.model->dim()},
               {"initial_loss", t.initial_loss},
               {"final_loss", t.final_loss}};
}

inline void run_index(StageResult& r, Context& ctx) {
  const auto encoder = ctx.load_encoder();
  const auto corpus = ctx.load_corpus();
  std::map<ann::ElementId, DenseVector> vectors;
  for (const auto& p : corpus->pins) vectors.emplace(p.signature, encoder->encode_pin(p));
  const auto index = ann::build(vectors, ctx.cfg.index, derive_seed(ctx.cfg.seed, 0x54));
  const auto p = ctx.at(paths::kIndex);
  std::filesystem::create_directories(p.parent_path());
  index.save(p);
  record(r, ctx, p);

  // Probe with evenly spaced corpus queries.
  const std::size_t nq = std::min(ctx.cfg.recall_queries, corpus->queries.size());
  double recall = 0.0, comps = 0.0;
  for (std::size_t i = 0; i < nq; ++i) {
    const auto& q = corpus->queries[i * corpus->queries.size() / nq];
    const auto probe = encoder->encode_text(q.text);
    ann::SearchStats stats;
    const auto approx = index.search(probe, 10, 0, &stats);
    recall += ann::recall_at_k(approx, ann::brute_force_search(vectors, probe.span(), 10));
    comps += double(stats.distance_computations);
  }
  r.metrics = {{"size", index.size()},
               {"M", ctx.cfg.index.M},
               {"ef_construction", ctx.cfg.index.ef_construction},
               {"ef_search", ctx.cfg.index.ef_search},
               {"max_level", index.max_level()},
               {"recall_queries", nq},
               {"recall_at_10", nq ? recall / double(nq) : 0.0},
               {"mean_distance_computations", nq ? comps / double(nq) : 0.0}};
}

inline void run_rank(StageResult& r, Context& ctx) {
  ctx.require(paths::kLabeledPairs, Stage::kCurate);
  const auto corpus = ctx.load_corpus();
  std::vector<LabeledPair> pairs;
  read_jsonl(ctx.at(paths::kLabeledPairs),
             [&](const Json& j, std::size_t) { pairs.push_back(labeled_pair_from_json(j, corpus->dims)); });
  const auto data = ranker_triplets(*corpus, pairs, derive_seed(ctx.cfg.seed, 0x55));
  if (data.train.empty() || data.eval.empty()) throw InvalidArgument("ranker needs both train and eval triplets");

  TowerConfig tc = TowerConfig::for_dims(corpus->dims);
  tc.dropout = ctx.cfg.ranker.dropout;
  tc.margin = ctx.cfg.ranker.margin;
  tc.learning_rate = ctx.cfg.ranker.learning_rate;
  tc.batch_size = ctx.cfg.ranker.batch_size;
  tc.epochs = ctx.cfg.ranker.epochs;
  tc.hidden = ctx.cfg.ranker.hidden;
  tc = tc.scaled(ctx.cfg.ranker_width);
  const auto seed = derive_seed(ctx.cfg.seed, 0x56);
  const double untrained = correct_rank(RankerModel(tc, seed), data.eval);
  const auto t = train_ranker(data.train, tc, seed);
  const auto p = ctx.at(paths::kRanker);
  std::filesystem::create_directories(p.parent_path());
  save_ranker(t.model, p);
  record(r, ctx, p);
  write(r, ctx, paths::kRankerLog, training_log_csv(t.log));
  r.metrics = {{"train_triplets", data.train.size()},
               {"eval_triplets", data.eval.size()},
               {"width_multiplier", ctx.cfg.ranker_width},
               {"hidden", tc.hidden},
               {"output", tc.output},
               {"epochs", tc.epochs},
               {"final_loss", t.log.empty() ? 0.0 : t.log.back().loss},
               {"untrained_correct_rank", untrained},
               {"correct_rank", correct_rank(t.model, data.eval)}};
}

/// Configured topics file, else the corpus queries that match generator
/// topics, else every Description query.
inline std::vector<QueryRecord> collection_topics(const PipelineConfig& cfg, const Corpus& corpus) {
  std::vector<QueryRecord> out;
  auto add = [&](const std::string& text) {
    QueryRecord q;
    if (const auto* found = corpus.find_query(text)) q = *found;
    q.text = text;
    out.push_back(std::move(q));
  };
  if (!cfg.topics.empty()) {
    for (const auto& line : read_lines(cfg.topics)) add(trim(line));
  } else {
    for (const auto& t : synthetic::in_cluster_topics()) {
      if (corpus.find_query(t)) add(t);
    }
    if (out.empty()) {
      for (const auto& q : corpus.queries) {
        if (q.category == QueryCategory::kDescription) add(q.text);
      }
    }
  }
  std::set<std::string> seen;
  std::erase_if(out, [&](const QueryRecord& q) { return !seen.insert(slugify(q.text)).second; });
  if (out.empty()) throw InvalidArgument("no collection topics");
  return out;
}

inline double mean_intent(const std::vector<collections::Collection>& cs, const Corpus& corpus,
                          const collections::Judge& judge) {
  if (cs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& c : cs) sum += collections::intent_satisfying_rate(c, corpus, judge).rate;
  return sum / double(cs.size());
}

inline void run_collect(StageResult& r, Context& ctx) {
  const auto encoder = ctx.load_encoder();
  const auto index = ctx.load_index();
  const auto corpus = ctx.load_corpus();
  const auto threads = ctx.cfg.worker_threads();
  const auto topics = collection_topics(ctx.cfg, *corpus);
  const auto cols = collections::build_collections(topics, *encoder, *index, ctx.cfg.collection_size, threads);
  write(r, ctx, paths::kCollections, [&] {
    std::vector<std::string> lines;
    for (const auto& c : cols) lines.push_back(collections::to_jsonl(c));
    return lines;
  }());
  const auto pages = ctx.at(paths::kPages);
  std::filesystem::remove_all(pages);
  collections::write_collection_pages(cols, pages);
  for (const auto& c : cols) record(r, ctx, pages / (c.slug + ".html"));

  // The judge reads stored pin text embeddings, independent of the encoder.
  const collections::EmbeddingJudge judge(std::make_shared<HashedTextEncoder>(corpus->dims.text),
                                          ctx.cfg.judge_threshold);
  std::vector<QueryRecord> probes;
  for (const auto& t : synthetic::off_cluster_topics()) {
    QueryRecord q;
    q.text = t;
    probes.push_back(std::move(q));
  }
  const auto off = collections::build_collections(probes, *encoder, *index, ctx.cfg.collection_size, threads);
  r.metrics = {{"collections", cols.size()},
               {"members_per_collection", ctx.cfg.collection_size},
               {"embedding_kind", encoder->name()},
               {"judge_threshold", ctx.cfg.judge_threshold},
               {"intent_rate", mean_intent(cols, *corpus, judge)},
               {"off_topic_probe_intent_rate", mean_intent(off, *corpus, judge)}};
}

inline void run_link(StageResult& r, Context& ctx) {
  ctx.require(paths::kCollections, Stage::kCollect);
  ctx.require(paths::kRanker, Stage::kRank);
  const auto corpus = ctx.load_corpus();
  const auto cols = collections::load_collections(ctx.at(paths::kCollections));
  const auto model = ranker::load_ranker(ctx.at(paths::kRanker));
  const auto encoder = ctx.load_encoder();
  Json modes = Json::object();
  std::optional<LinkOutcome> chosen;
  for (auto m : {LinkMode::kEnabled, LinkMode::kControl, LinkMode::kAblation}) {
    auto o = link_mode(m, *corpus, cols, &model, encoder.get(), ctx.cfg.annotations_per_pin);
    modes[std::string(to_string(m))] = o.summary();
    if (m == ctx.cfg.link_mode) chosen = std::move(o);
  }
  const auto& g = chosen->build.graph;
  write(r, ctx, paths::kGraph, linkgraph::graph_jsonl(g));
  write(r, ctx, paths::kLinkReport, linkgraph::link_report(g, chosen->scores).dump(2) + "\n");
  write(r, ctx, paths::kSitemap, linkgraph::export_sitemap(g, ctx.cfg.base_url));
  r.metrics = chosen->summary();
  r.metrics["nodes"] = g.node_count();
  r.metrics["pagerank_iterations"] = chosen->scores.iterations;
  r.metrics["pagerank_residual"] = chosen->scores.residual;
  r.metrics["pagerank_converged"] = chosen->scores.converged;
  double mass = 0.0, top = 0.0;
  for (double s : chosen->scores.scores) {
    mass += s;
    top = std::max(top, s);
  }
  r.metrics["pagerank_mass"] = mass;
  r.metrics["max_authority"] = top;
  r.metrics["modes"] = modes;
}

inline agent::Taxonomy corpus_taxonomy(const Corpus& corpus) {
  agent::Taxonomy t;
  t.embedding_dim = corpus.dims.text;
  std::set<std::string> seen;
  for (const auto& p : corpus.pins) {
    const auto term = trim(p.description);
    if (term.empty() || p.category.empty() || !seen.insert(term).second) continue;
    t.terms.push_back({term, p.category});
  }
  std::sort(t.terms.begin(), t.terms.end(), [](const auto& a, const auto& b) { return a.term < b.term; });
  if (t.terms.empty()) throw DependencyError("corpus pins carry no description and category to build a taxonomy from");
  return t;
}

inline void run_agent(StageResult& r, Context& ctx) {
  const auto encoder = ctx.load_encoder();
  const auto index = ctx.load_index();
  const auto corpus = ctx.load_corpus();
  const auto trends_path = ctx.cfg.trends_path();
  if (!std::filesystem::exists(trends_path)) {
    throw DependencyError("missing artifact " + trends_path.string() + " (produced by stage 'corpus')");
  }
  const auto memory = ctx.cfg.memory_in.empty() ? agent::LongMemory{} : agent::load_long_memory(ctx.cfg.memory_in);
  auto cfg = ctx.cfg.agent;
  cfg.threads = ctx.cfg.worker_threads();
  const auto tools = agent::default_tools(agent::load_trends(trends_path),
                                          std::make_shared<const agent::Taxonomy>(corpus_taxonomy(*corpus)), index,
                                          encoder, corpus, {cfg.filter_threshold, ctx.cfg.lookup});
  const auto ep = agent::run_episode(cfg, tools, memory, derive_seed(ctx.cfg.seed, 0x57));
  write(r, ctx, paths::kTrendQueries, [&] {
    std::vector<std::string> lines;
    for (const auto& q : ep.queries) lines.push_back(to_jsonl(q));
    return lines;
  }());
  write(r, ctx, paths::kTrace, ep.trace);
  write(r, ctx, paths::kLongMemory, agent::to_json(ep.state.long_memory).dump(2) + "\n");
  std::size_t fetched = 0, kept = 0, validated = 0, errors = 0;
  for (const auto& m : ep.state.short_memory) {
    if (m.observation.contains("error")) ++errors;
    if (m.action.name == "fetch_trends" && m.observation.contains("trends")) fetched += m.observation["trends"].size();
    if (m.action.name == "semantic_filter" && m.observation.value("keep", false)) ++kept;
    if (m.action.name == "validate") ++validated;
  }
  r.metrics = {{"trends_fetched", fetched},
               {"trends_kept", kept},
               {"candidates_validated", validated},
               {"queries_emitted", ep.queries.size()},
               {"tool_errors", errors},
               {"trace_records", ep.trace.size()},
               {"replay_matches", agent::replay(ep.trace, memory) == ep.state}};
}

/// Headline metrics pulled from the stage reports.
inline const std::vector<std::pair<std::string, std::string>>& headline_metrics() {
  static const std::vector<std::pair<std::string, std::string>> rows = {
      {"curate", "/retain_branches/high_impressions"},
      {"curate", "/retain_branches/high_ctr"},
      {"curate", "/retain_branches/top_position"},
      {"curate", "/retain_branches/rejected"},
      {"curate", "/positives"},
      {"encode", "/final_loss"},
      {"index", "/recall_at_10"},
      {"rank", "/untrained_correct_rank"},
      {"rank", "/correct_rank"},
      {"collect", "/intent_rate"},
      {"collect", "/off_topic_probe_intent_rate"},
      {"link", "/mean_collection_authority"},
      {"link", "/orphan_pins"},
      {"link", "/pagerank_iterations"},
      {"link", "/modes/enabled/mean_collection_authority"},
      {"link", "/modes/control/mean_collection_authority"},
      {"link", "/modes/ablation/mean_collection_authority"},
      {"agent", "/queries_emitted"},
      {"agent", "/replay_matches"},
  };
  return rows;
}

inline void run_eval(StageResult& r, Context& ctx) {
  Json stages = Json::object();
  Json summary = Json::object();
  std::vector<std::string> missing;
  for (auto s : kAllStages) {
    if (s == Stage::kEval) continue;
    const auto p = ctx.cfg.out / paths::kReports / (std::string(to_string(s)) + ".json");
    if (!std::filesystem::exists(p)) {
      missing.emplace_back(to_string(s));
      continue;
    }
    stages[std::string(to_string(s))] = Json::parse(read_text(p));
  }
  if (stages.empty()) {
    throw DependencyError("no stage reports under " + (ctx.cfg.out / paths::kReports).string() + "; run a stage first");
  }
  for (const auto& [stage, ptr] : headline_metrics()) {
    if (!stages.contains(stage)) continue;
    const Json::json_pointer jp(ptr);
    if (stages[stage]["metrics"].contains(jp)) summary[stage + ptr] = stages[stage]["metrics"][jp];
  }
  const Json report = {{"seed", ctx.cfg.seed}, {"summary", summary}, {"stages", stages}, {"missing_stages", missing}};
  write(r, ctx, paths::kReport, report.dump(2) + "\n");
  r.metrics = {{"summary", summary}, {"missing_stages", missing}};
}

inline void run_stage(Stage s, StageResult& r, Context& ctx) {
  switch (s) {
    case Stage::kCorpus: return run_corpus(r, ctx);
    case Stage::kCurate: return run_curate(r, ctx);
    case Stage::kEncode: return run_encode(r, ctx);
    case Stage::kIndex: return run_index(r, ctx);
    case Stage::kRank: return run_rank(r, ctx);
    case Stage::kCollect: return run_collect(r, ctx);
    case Stage::kLink: return run_link(r, ctx);
    case Stage::kAgent: return run_agent(r, ctx);
    case Stage::kEval: return run_eval(r, ctx);
  }
}

}  // namespace detail

/// Runs the requested stages in dependency order. A failing stage skips its
/// dependents in this run; independent stages still run. Stages whose
/// upstream did not run read the upstream artifacts from the output dir.
inline PipelineReport run_pipeline(const PipelineConfig& cfg,
                                   const std::function<void(const StageResult&)>& on_stage = {}) {
  std::vector<Stage> order(cfg.stages.begin(), cfg.stages.end());
  if (order.empty()) order.assign(std::begin(kAllStages), std::end(kAllStages));
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  std::error_code ec;
  std::filesystem::create_directories(cfg.out / paths::kReports, ec);
  if (ec) throw ConfigError("output directory " + cfg.out.string() + " is not writable: " + ec.message());

  PipelineReport report;
  detail::Context ctx{cfg, nullptr};
  std::set<Stage> broken;
  for (auto s : order) {
    StageResult r;
    r.stage = s;
    for (auto d : dependencies(s)) {
      if (broken.count(d)) {
        r.status = StageResult::Status::kSkipped;
        r.error = "dependency '" + std::string(to_string(d)) + "' did not complete";
        break;
      }
    }
    if (r.status == StageResult::Status::kOk) {
      const auto start = std::chrono::steady_clock::now();
      try {
        detail::run_stage(s, r, ctx);
      } catch (const std::exception& e) {
        r.status = StageResult::Status::kFailed;
        r.error = e.what();
        r.metrics = Json::object();
      }
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    const auto report_path = cfg.out / paths::kReports / (std::string(to_string(s)) + ".json");
    if (r.status == StageResult::Status::kOk) {
      if (s != Stage::kEval) write_text(report_path, r.to_json().dump(2) + "\n");
    } else {
      broken.insert(s);
      std::filesystem::remove(report_path, ec);
    }
    if (on_stage) on_stage(r);
    report.stages.push_back(std::move(r));
  }
  return report;
}

}  // namespace geoforge::pipeline
