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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geoforge/ann/hnsw.hpp"
#include "geoforge/core/corpus.hpp"
#include "geoforge/core/error.hpp"
#include "geoforge/core/jsonl.hpp"
#include "geoforge/core/parallel.hpp"
#include "geoforge/core/records.hpp"
#include "geoforge/core/rng.hpp"
#include "geoforge/core/synthetic.hpp"
#include "geoforge/core/text.hpp"
#include "geoforge/encoders/encoder.hpp"

namespace geoforge::agent {

// ---------------------------------------------------------------------------
// Trends

struct TrendSignal {
  std::string term;
  std::string region;
  std::string timespan;
  double velocity = 0.0;
  std::string category;

  friend bool operator==(const TrendSignal&, const TrendSignal&) = default;
};

inline Json to_json(const TrendSignal& t) {
  return {{"term", t.term}, {"region", t.region}, {"timespan", t.timespan}, {"velocity", t.velocity},
          {"category", t.category}};
}

/// Accepts either a velocity or a scripted lifecycle `curve` of interest
/// levels, whose relative growth from first to last point is the velocity.
inline TrendSignal trend_from_json(const Json& j) {
  TrendSignal t;
  t.term = trim(detail::require<std::string>(j, "term"));
  if (t.term.empty()) throw InvalidArgument("trend term must be non-empty");
  t.region = detail::require<std::string>(j, "region");
  t.timespan = detail::require<std::string>(j, "timespan");
  t.category = j.value("category", std::string());
  if (j.contains("velocity")) {
    t.velocity = detail::require<double>(j, "velocity");
  } else if (j.contains("curve")) {
    const auto curve = detail::require<std::vector<double>>(j, "curve");
    if (curve.size() < 2 || !(curve.front() > 0.0)) {
      throw InvalidArgument("trend curve needs at least two points and a positive start");
    }
    t.velocity = (curve.back() - curve.front()) / curve.front();
  } else {
    throw InvalidArgument("trend needs 'velocity' or 'curve'");
  }
  if (!std::isfinite(t.velocity)) throw InvalidArgument("trend velocity must be finite");
  return t;
}

inline std::vector<TrendSignal> load_trends(const std::filesystem::path& path) {
  std::vector<TrendSignal> out;
  read_jsonl(path, [&](const Json& j, std::size_t) { out.push_back(trend_from_json(j)); });
  return out;
}

inline std::vector<std::string> trends_jsonl(const std::vector<TrendSignal>& ts) {
  std::vector<std::string> lines;
  for (const auto& t : ts) lines.push_back(to_json(t).dump());
  return lines;
}

// ---------------------------------------------------------------------------
// Taxonomy and long-term memory

struct TaxonomyTerm {
  std::string term;
  std::string category;
};

/// Target categories with exemplar terms; trends in blocked categories score 0.
struct Taxonomy {
  std::vector<TaxonomyTerm> terms;
  std::set<std::string> blocked{"news", "sports", "politics"};
  std::size_t embedding_dim = 768;

  bool allows(const std::string& category) const {
    for (const auto& t : terms) {
      if (t.category == category) return true;
    }
    return false;
  }

  /// Taxonomy category of the closest term, or the trend's own label.
  std::string category_for(const TrendSignal& t) const {
    for (const auto& x : terms) {
      if (x.term == t.term) return x.category;
    }
    return t.category;
  }
};

struct TermRecord {
  std::string category;
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  std::size_t last_count = 0;
  double last_quality = 0.0;
  std::map<std::string, std::size_t> templates;  // accepted counts by template id

  friend bool operator==(const TermRecord&, const TermRecord&) = default;
};

using LongMemory = std::map<std::string, TermRecord>;

inline Json to_json(const LongMemory& m) {
  Json j = Json::object();
  for (const auto& [term, r] : m) {
    j[term] = {{"category", r.category},       {"attempts", r.attempts},         {"accepted", r.accepted},
               {"last_count", r.last_count},   {"last_quality", r.last_quality}, {"templates", r.templates}};
  }
  return j;
}

inline LongMemory long_memory_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("long memory must be a JSON object");
  LongMemory m;
  for (const auto& [term, r] : j.items()) {
    TermRecord t;
    t.category = detail::require<std::string>(r, "category");
    t.attempts = detail::require<std::size_t>(r, "attempts");
    t.accepted = detail::require<std::size_t>(r, "accepted");
    t.last_count = r.value("last_count", std::size_t{0});
    t.last_quality = r.value("last_quality", 0.0);
    t.templates = r.value("templates", std::map<std::string, std::size_t>{});
    m.emplace(term, std::move(t));
  }
  return m;
}

inline LongMemory load_long_memory(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  try {
    return long_memory_from_json(Json::parse(read_text(path)));
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

// ---------------------------------------------------------------------------
// Tools

struct FilterResult {
  double p = 0.0;
  bool keep = false;
};

/// Relevance p(r|t): 0 for blocked categories, 1 for an exact taxonomy term,
/// else the best hashed-text cosine to a taxonomy term (clamped at 0),
/// halved when the trend's category is outside the taxonomy.
inline FilterResult semantic_filter(const TrendSignal& t, const Taxonomy& tax, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidArgument("filter threshold must lie in [0, 1]");
  double p = 0.0;
  if (!tax.blocked.count(t.category)) {
    bool exact = false;
    for (const auto& x : tax.terms) exact = exact || x.term == t.term;
    if (exact) {
      p = 1.0;
    } else if (!tokenize(t.term).empty()) {
      const auto q = hashed_text_embedding(t.term, tax.embedding_dim);
      for (const auto& x : tax.terms) {
        p = std::max(p, cosine(q, hashed_text_embedding(x.term, tax.embedding_dim)));
      }
      p = std::clamp(p, 0.0, 1.0);
      if (!tax.allows(t.category)) p *= 0.5;
    }
  }
  return {p, p >= threshold};
}

struct LookupResult {
  std::size_t count = 0;
  double mean_quality = 0.0;
  bool sufficient = false;
};

struct LookupOptions {
  std::size_t min_count = 25;
  double relevance_floor = 0.4;
  std::size_t ef = 100;
};

/// Counts top-ef pins at or above the relevance floor; sufficient when the
/// count exceeds min_count.
inline LookupResult content_lookup(std::string_view query, const ann::HnswIndex& index, const Encoder& encoder,
                                   const Corpus& corpus, const LookupOptions& opt) {
  LookupResult r;
  if (index.empty()) return r;
  double quality = 0.0;
  for (const auto& n : index.search(encoder.encode_text(query), opt.ef, opt.ef)) {
    if (n.similarity < opt.relevance_floor) continue;
    ++r.count;
    if (corpus.has_pin(n.id)) quality += corpus.pin(n.id).perception_score;
  }
  r.mean_quality = r.count ? quality / double(r.count) : 0.0;
  r.sufficient = r.count > opt.min_count;
  return r;
}

struct QueryTemplate {
  std::string_view id;
  QueryCategory category;
  std::string_view pattern;  // {term} and {category} placeholders
};

/// Interleaved so any three consecutive templates cover all query categories.
inline constexpr QueryTemplate kTemplates[] = {
    {"plain", QueryCategory::kDescription, "{term}"},
    {"aesthetic", QueryCategory::kStyleDetail, "{term} aesthetic"},
    {"ideas", QueryCategory::kUseCase, "{term} ideas"},
    {"with-category", QueryCategory::kDescription, "{term} {category}"},
    {"look", QueryCategory::kStyleDetail, "{term} look"},
    {"inspiration", QueryCategory::kUseCase, "{term} inspiration"},
};

inline std::string fill_template(std::string_view pattern, std::string_view term, std::string_view category) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size();) {
    if (pattern.substr(i).starts_with("{term}")) {
      out += term;
      i += 6;
    } else if (pattern.substr(i).starts_with("{category}")) {
      out += category;
      i += 10;
    } else {
      out += pattern[i++];
    }
  }
  return trim(out);
}

struct Expansion {
  QueryRecord query;
  std::string template_id;
};

/// Category-conditioned variants. Template shapes that were accepted before
/// for the same taxonomy category come first (the few-shot analog); the rest
/// follow in a seed-rotated order. Returns at most one variant per template.
inline std::vector<Expansion> expand_query(const TrendSignal& t, const Taxonomy& tax, const LongMemory& memory,
                                           std::size_t n, std::uint64_t seed) {
  if (tax.terms.empty()) throw InvalidArgument("expand_query: taxonomy is empty");
  const std::string category = tax.category_for(t);
  std::map<std::string, std::size_t> shots;
  for (const auto& [term, rec] : memory) {
    if (rec.category != category) continue;
    for (const auto& [id, c] : rec.templates) shots[id] += c;
  }
  std::vector<std::size_t> order;
  std::vector<std::pair<std::size_t, std::size_t>> preferred;  // (count, template index)
  for (std::size_t i = 0; i < std::size(kTemplates); ++i) {
    auto it = shots.find(std::string(kTemplates[i].id));
    if (it != shots.end() && it->second > 0) preferred.emplace_back(it->second, i);
  }
  std::sort(preferred.begin(), preferred.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  for (auto [c, i] : preferred) order.push_back(i);
  const std::size_t count = std::size(kTemplates);
  const std::size_t offset = 3 * (derive_seed(seed, fnv1a64(t.term)) % 2);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = (k + offset) % count;
    if (std::find(order.begin(), order.end(), i) == order.end()) order.push_back(i);
  }
  std::vector<Expansion> out;
  std::set<std::string> seen;
  for (auto i : order) {
    if (out.size() >= n) break;
    const auto& tpl = kTemplates[i];
    auto text = fill_template(tpl.pattern, t.term, category);
    if (text.empty() || !seen.insert(text).second) continue;
    QueryRecord q;
    q.text = std::move(text);
    q.category = tpl.category;
    q.source = PairSource::kSynthetic;
    out.push_back({std::move(q), std::string(tpl.id)});
  }
  return out;
}

/// The four tools the nodes call. Each must be deterministic in its inputs.
struct ToolSuite {
  std::function<std::vector<TrendSignal>(const std::string& region, const std::string& timespan)> fetch_trends;
  std::function<FilterResult(const TrendSignal&)> semantic_filter;
  std::function<LookupResult(const std::string& query)> content_lookup;
  std::function<std::vector<Expansion>(const TrendSignal&, const LongMemory&, std::size_t n, std::uint64_t seed)>
      expand_query;
};

/// Trend feed backed by an in-memory list (typically loaded from trends.jsonl).
inline std::function<std::vector<TrendSignal>(const std::string&, const std::string&)> feed_fetcher(
    std::vector<TrendSignal> feed) {
  return [feed = std::move(feed)](const std::string& region, const std::string& timespan) {
    std::vector<TrendSignal> out;
    for (const auto& t : feed) {
      if (t.region == region && t.timespan == timespan) out.push_back(t);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.term < b.term; });
    return out;
  };
}

// ---------------------------------------------------------------------------
// State machine

enum class Node { kPlanning, kRetrieval, kFiltering, kExpansion, kValidation };

inline constexpr Node kPlan[] = {Node::kPlanning, Node::kRetrieval, Node::kFiltering, Node::kExpansion,
                                 Node::kValidation};

inline std::string_view to_string(Node n) {
  switch (n) {
    case Node::kPlanning: return "Planning";
    case Node::kRetrieval: return "Retrieval";
    case Node::kFiltering: return "Filtering";
    case Node::kExpansion: return "Expansion";
    case Node::kValidation: return "Validation";
  }
  return "?";
}

inline Node parse_node(std::string_view s) {
  for (auto n : kPlan) {
    if (to_string(n) == s) return n;
  }
  throw InvalidArgument("unknown node '" + std::string(s) + "'");
}

/// Tool calls and node moves. `advance` follows the single plan edge out of
/// the current node; `finish` ends the episode at Validation.
inline bool permitted(Node n, std::string_view action) {
  if (action == "advance") return n != Node::kValidation;
  switch (n) {
    case Node::kPlanning: return action == "plan";
    case Node::kRetrieval: return action == "fetch_trends";
    case Node::kFiltering: return action == "semantic_filter";
    case Node::kExpansion: return action == "expand_query";
    case Node::kValidation: return action == "content_lookup" || action == "validate" || action == "finish";
  }
  return false;
}

struct Action {
  std::string name;
  std::string key;  // tool-call key, e.g. the trend term
};

struct MemoryRecord {
  Node node = Node::kPlanning;
  Action action;
  Json observation;

  friend bool operator==(const MemoryRecord& a, const MemoryRecord& b) {
    return a.node == b.node && a.action.name == b.action.name && a.action.key == b.action.key &&
           a.observation == b.observation;
  }
};

struct AgentState {
  std::vector<MemoryRecord> short_memory;
  LongMemory long_memory;
  Node cursor = Node::kPlanning;
  std::vector<QueryRecord> emitted;
  bool finished = false;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

inline Json query_json(const QueryRecord& q) {
  return {{"text", q.text}, {"category", to_string(q.category)}, {"language", q.language}};
}

inline QueryRecord query_from_observation(const Json& j) {
  QueryRecord q;
  q.text = detail::require<std::string>(j, "text");
  q.category = parse_category(detail::require<std::string>(j, "category"));
  q.language = j.value("language", std::string("en"));
  q.source = PairSource::kSynthetic;
  return q;
}

/// s' = f(s, a, o): appends (node, action, observation) to short-term memory,
/// moves the cursor on `advance`, and applies Validation outcomes to
/// long-term memory and the emitted list.
inline AgentState transition(AgentState s, const Action& a, const Json& o) {
  if (s.finished) throw InvalidArgument("episode already finished; action '" + a.name + "' rejected");
  if (!permitted(s.cursor, a.name)) {
    throw InvalidArgument("action '" + a.name + "' is not permitted at node " + std::string(to_string(s.cursor)));
  }
  s.short_memory.push_back({s.cursor, a, o});
  if (a.name == "advance") {
    s.cursor = kPlan[std::size_t(s.cursor) + 1];
  } else if (a.name == "finish") {
    s.finished = true;
  } else if (a.name == "validate") {
    auto& rec = s.long_memory[detail::require<std::string>(o, "term")];
    rec.category = detail::require<std::string>(o, "category");
    ++rec.attempts;
    rec.last_count = detail::require<std::size_t>(o, "count");
    rec.last_quality = detail::require<double>(o, "mean_quality");
    if (detail::require<bool>(o, "accepted")) {
      ++rec.accepted;
      ++rec.templates[detail::require<std::string>(o, "template")];
      s.emitted.push_back(query_from_observation(o.at("query")));
    }
  }
  return s;
}

inline std::string trace_line(const MemoryRecord& r, std::size_t step) {
  return Json{{"step", step},
              {"node", to_string(r.node)},
              {"action", r.action.name},
              {"key", r.action.key},
              {"observation", r.observation}}
      .dump();
}

inline std::vector<std::string> trace_lines(const AgentState& s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.short_memory.size(); ++i) out.push_back(trace_line(s.short_memory[i], i));
  return out;
}

/// Re-applies a recorded trace from the initial long-term memory.
inline AgentState replay(const std::vector<std::string>& lines, LongMemory initial) {
  AgentState s;
  s.long_memory = std::move(initial);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Json j;
    try {
      j = Json::parse(lines[i]);
    } catch (const Json::parse_error& e) {
      throw ParseError("<trace>", i + 1, e.what());
    }
    const auto node = parse_node(detail::require<std::string>(j, "node"));
    if (node != s.cursor) {
      throw InvalidArgument("trace line " + std::to_string(i + 1) + " is at node " + std::string(to_string(node)) +
                            " but the cursor is at " + std::string(to_string(s.cursor)));
    }
    s = transition(std::move(s), {detail::require<std::string>(j, "action"), detail::require<std::string>(j, "key")},
                   j.at("observation"));
  }
  return s;
}

struct AgentConfig {
  std::vector<std::string> regions{"US"};
  std::vector<std::string> timespans{"past_7_days"};
  double filter_threshold = 0.5;
  double velocity_floor = 0.2;
  std::size_t expansions_per_trend = 3;
  std::size_t threads = 1;
};

struct EpisodeResult {
  std::vector<QueryRecord> queries;
  std::vector<std::string> trace;
  AgentState state;
};

/// Runs Planning → Retrieval → Filtering → Expansion → Validation once. Tool
/// failures are recorded as error observations and the episode continues;
/// a Planning failure is fatal.
inline EpisodeResult run_episode(const AgentConfig& cfg, const ToolSuite& tools, LongMemory memory,
                                 std::uint64_t seed) {
  if (!tools.fetch_trends || !tools.semantic_filter || !tools.content_lookup || !tools.expand_query) {
    throw DependencyError("run_episode: all four tools are required");
  }
  AgentState s;
  s.long_memory = std::move(memory);
  auto step = [&](const std::string& name, const std::string& key, Json obs) {
    s = transition(std::move(s), {name, key}, obs);
  };
  auto error_obs = [](const std::exception& e) { return Json{{"error", e.what()}}; };

  // Planning
  if (cfg.regions.empty() || cfg.timespans.empty()) throw ConfigError("agent plan needs regions and timespans");
  std::vector<std::pair<std::string, std::string>> calls;
  for (const auto& r : cfg.regions) {
    for (const auto& t : cfg.timespans) calls.emplace_back(r, t);
  }
  std::sort(calls.begin(), calls.end());
  calls.erase(std::unique(calls.begin(), calls.end()), calls.end());
  Json plan = Json::array();
  for (const auto& [r, t] : calls) plan.push_back({{"region", r}, {"timespan", t}});
  step("plan", "", {{"calls", plan}, {"seed", seed}});
  step("advance", "", Json::object());

  // Retrieval: calls run concurrently, observations merge in call-key order.
  std::vector<Json> fetched(calls.size());
  parallel_for(calls.size(), cfg.threads, [&](std::size_t i) {
    try {
      Json arr = Json::array();
      for (const auto& t : tools.fetch_trends(calls[i].first, calls[i].second)) arr.push_back(to_json(t));
      fetched[i] = {{"trends", arr}};
    } catch (const std::exception& e) {
      fetched[i] = error_obs(e);
    }
  });
  std::vector<TrendSignal> trends;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < calls.size(); ++i) {
    step("fetch_trends", calls[i].first + "/" + calls[i].second, fetched[i]);
    if (!fetched[i].contains("trends")) continue;
    for (const auto& j : fetched[i]["trends"]) {
      auto t = trend_from_json(j);
      if (seen.insert(t.term).second) trends.push_back(std::move(t));
    }
  }
  std::sort(trends.begin(), trends.end(), [](const auto& a, const auto& b) { return a.term < b.term; });
  step("advance", "", {{"trends", trends.size()}});

  // Filtering
  std::vector<std::pair<TrendSignal, FilterResult>> kept;
  for (const auto& t : trends) {
    try {
      const auto f = tools.semantic_filter(t);
      step("semantic_filter", t.term, {{"category", t.category}, {"p", f.p}, {"keep", f.keep}});
      if (f.keep) kept.emplace_back(t, f);
    } catch (const std::exception& e) {
      step("semantic_filter", t.term, error_obs(e));
    }
  }
  step("advance", "", {{"kept", kept.size()}});

  // Expansion
  struct Candidate {
    TrendSignal trend;
    FilterResult filter;
    Expansion expansion;
  };
  std::vector<Candidate> candidates;
  for (const auto& [t, f] : kept) {
    try {
      const auto xs = tools.expand_query(t, s.long_memory, cfg.expansions_per_trend, seed);
      Json arr = Json::array();
      for (const auto& x : xs) {
        Json q = query_json(x.query);
        q["template"] = x.template_id;
        arr.push_back(q);
        candidates.push_back({t, f, x});
      }
      step("expand_query", t.term, {{"variants", arr}});
    } catch (const std::exception& e) {
      step("expand_query", t.term, error_obs(e));
    }
  }
  step("advance", "", {{"candidates", candidates.size()}});

  // Validation
  std::set<std::string> emitted;
  for (const auto& c : candidates) {
    const auto& text = c.expansion.query.text;
    LookupResult lookup;
    try {
      lookup = tools.content_lookup(text);
      step("content_lookup", text,
           {{"count", lookup.count}, {"mean_quality", lookup.mean_quality}, {"sufficient", lookup.sufficient}});
    } catch (const std::exception& e) {
      step("content_lookup", text, error_obs(e));
      continue;
    }
    const bool timely = c.trend.velocity >= cfg.velocity_floor;
    const bool fresh = !emitted.count(text);
    const bool accepted = c.filter.keep && lookup.sufficient && timely && fresh;
    if (accepted) emitted.insert(text);
    step("validate", text,
         {{"term", c.trend.term},
          {"category", c.trend.category},
          {"template", c.expansion.template_id},
          {"query", query_json(c.expansion.query)},
          {"p", c.filter.p},
          {"aligned", c.filter.keep},
          {"count", lookup.count},
          {"mean_quality", lookup.mean_quality},
          {"sufficient", lookup.sufficient},
          {"velocity", c.trend.velocity},
          {"timely", timely},
          {"duplicate", !fresh},
          {"accepted", accepted}});
  }
  step("finish", "", {{"emitted", s.emitted.size()}});

  EpisodeResult r;
  r.queries = s.emitted;
  r.trace = trace_lines(s);
  r.state = std::move(s);
  return r;
}

/// Standard tools over a trend feed, the corpus index, and a taxonomy.
struct DefaultToolOptions {
  double filter_threshold = 0.5;
  LookupOptions lookup;
};

inline ToolSuite default_tools(std::vector<TrendSignal> feed, std::shared_ptr<const Taxonomy> taxonomy,
                               std::shared_ptr<const ann::HnswIndex> index, std::shared_ptr<const Encoder> encoder,
                               std::shared_ptr<const Corpus> corpus, DefaultToolOptions opt = {}) {
  ToolSuite t;
  t.fetch_trends = feed_fetcher(std::move(feed));
  t.semantic_filter = [taxonomy, opt](const TrendSignal& tr) {
    return semantic_filter(tr, *taxonomy, opt.filter_threshold);
  };
  t.content_lookup = [index, encoder, corpus, opt](const std::string& q) {
    return content_lookup(q, *index, *encoder, *corpus, opt.lookup);
  };
  t.expand_query = [taxonomy](const TrendSignal& tr, const LongMemory& m, std::size_t n, std::uint64_t seed) {
    return expand_query(tr, *taxonomy, m, n, seed);
  };
  return t;
}

// ---------------------------------------------------------------------------
// Synthetic inputs

using synthetic::kHeldOutThemes;
using synthetic::kThemeCount;
using synthetic::kThemes;

/// Theme cores of the generated corpus as taxonomy terms.
inline Taxonomy synthetic_taxonomy(std::size_t num_themes = kThemeCount, std::size_t embedding_dim = 768) {
  Taxonomy t;
  t.embedding_dim = embedding_dim;
  for (std::size_t i = 0; i < std::min(num_themes, kThemeCount); ++i) t.terms.push_back({kThemes[i].core, kThemes[i].category});
  return t;
}

/// A scripted feed: every corpus theme trends with a random velocity (some
/// below any sensible floor), held-out themes trend fast but have no
/// content, and blocked categories carry both unrelated and lookalike terms.
inline std::vector<TrendSignal> synthetic_trend_feed(std::uint64_t seed, std::size_t num_themes = kThemeCount,
                                                     const std::string& region = "US",
                                                     const std::string& timespan = "past_7_days") {
  Rng rng(derive_seed(seed, 0x7472));
  std::vector<TrendSignal> out;
  for (std::size_t i = 0; i < std::min(num_themes, kThemeCount); ++i) {
    out.push_back({kThemes[i].core, region, timespan, rng.uniform(0.0, 1.5), kThemes[i].category});
  }
  for (const auto& t : kHeldOutThemes) out.push_back({t.core, region, timespan, rng.uniform(0.5, 2.0), t.category});
  const TrendSignal blocked[] = {
      {"election results", region, timespan, 3.0, "politics"},
      {"championship final", region, timespan, 2.5, "sports"},
      {"breaking news", region, timespan, 4.0, "news"},
      {std::string(kThemes[0].core) + " jersey", region, timespan, 1.8, "sports"},
      {std::string(kThemes[1].core) + " scandal", region, timespan, 2.2, "news"},
  };
  for (const auto& t : blocked) out.push_back(t);
  return out;
}

}  // namespace geoforge::agent
