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
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geoforge/core/corpus.hpp"
#include "geoforge/core/error.hpp"
#include "geoforge/core/records.hpp"
#include "geoforge/core/rng.hpp"
#include "geoforge/core/vector_math.hpp"

namespace geoforge::curation {

inline constexpr std::uint64_t kHighImpressions = 1000;
inline constexpr std::uint64_t kMinImpressions = 10;
inline constexpr double kHighCtr = 0.8;
inline constexpr double kTopPosition = 10.0;
inline constexpr double kNavboostPromotion = 0.54;
inline constexpr double kRelatednessCeiling = 0.5;
inline constexpr double kDedupThreshold = 0.9;
inline constexpr std::size_t kTopQueriesPerPin = 30;

// ---------------------------------------------------------------------------
// Retention filter

/// Which disjunct of the retention rule fires first; kRejected when none does.
enum class RetainBranch { kHighImpressions, kHighCtr, kTopPosition, kRejected };

/// The rule on raw aggregates; \`ctr\` is only read when impressions exceed
/// the minimum.
inline RetainBranch retain_branch(std::uint64_t impressions, double ctr, double avg_position) {
  if (impressions > kHighImpressions) return RetainBranch::kHighImpressions;
  if (impressions > kMinImpressions) {
    if (ctr >= kHighCtr) return RetainBranch::kHighCtr;
    if (avg_position <= kTopPosition) return RetainBranch::kTopPosition;
  }
  return RetainBranch::kRejected;
}

inline RetainBranch retain_branch(const EngagementRecord& r) {
  // An undefined CTR (no impressions) never reaches the CTR test.
  return retain_branch(r.impressions, r.ctr().value_or(0.0), r.avg_position);
}

inline bool retain(const EngagementRecord& r) { return retain_branch(r) != RetainBranch::kRejected; }

/// Retained records for one pin, best first: impressions desc, position asc,
/// then query text.
inline std::vector<EngagementRecord> select_top_queries(std::span<const EngagementRecord> records,
                                                        std::size_t n = kTopQueriesPerPin) {
  if (n == 0) throw InvalidArgument("select_top_queries: n must be at least 1");
  std::vector<EngagementRecord> kept;
  for (const auto& r : records) {
    if (r.pin_signature != records.front().pin_signature) {
      throw InvalidArgument("select_top_queries: records span pins " +
                            std::to_string(records.front().pin_signature) + " and " +
                            std::to_string(r.pin_signature));
    }
    if (retain(r)) kept.push_back(r);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.impressions != b.impressions) return a.impressions > b.impressions;
    if (a.avg_position != b.avg_position) return a.avg_position < b.avg_position;
    return a.query_text < b.query_text;
  });
  if (kept.size() > n) kept.resize(n);
  return kept;
}

// ---------------------------------------------------------------------------
// Stratified sampling

struct CategoryMix {
  double description = 0.3;
  double style = 0.3;
  double usecase = 0.4;

  double operator[](QueryCategory c) const {
    switch (c) {
      case QueryCategory::kDescription: return description;
      case QueryCategory::kStyleDetail: return style;
      case QueryCategory::kUseCase: return usecase;
    }
    return 0.0;
  }

  void validate() const {
    for (double f : {description, style, usecase}) {
      if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("category fraction outside [0,1]");
    }
    if (std::abs(description + style + usecase - 1.0) > 1e-9) {
      throw InvalidArgument("category fractions must sum to 1");
    }
  }
};

inline std::size_t category_slot(QueryCategory c) { return static_cast<std::size_t>(c); }

/// Largest-remainder apportionment of `total` over the mix.
inline std::array<std::size_t, 3> stratum_counts(const CategoryMix& mix, std::size_t total) {
  mix.validate();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rema{};
  std::size_t assigned = 0;
  for (auto c : kAllCategories) {
    const double exact = double(total) * mix[c];
    const std::size_t s = category_slot(c);
    counts[s] = static_cast<std::size_t>(std::floor(exact));
    rema[s] = exact - double(counts[s]);
    assigned += counts[s];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rema[a] > rema[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

struct StratifiedSample {
  std::vector<LabeledPair> pairs;
  std::array<std::size_t, 3> counts{};
  /// Per category: true when its pool was smaller than its quota.
  std::array<bool, 3> with_replacement{};
};

inline StratifiedSample stratify_sample(std::span<const LabeledPair> pairs, const CategoryMix& mix,
                                        std::size_t total, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 3> pools;
  for (std::size_t i = 0; i < pairs.size(); ++i) pools[category_slot(pairs[i].query.category)].push_back(i);
  StratifiedSample out;
  out.counts = stratum_counts(mix, total);
  Rng rng(seed);
  for (auto c : kAllCategories) {
    const std::size_t s = category_slot(c);
    const std::size_t want = out.counts[s];
    auto& pool = pools[s];
    if (want == 0) continue;
    if (pool.empty()) {
      throw InvalidArgument("stratify_sample: no pairs in required category " + std::string(to_string(c)));
    }
    if (pool.size() >= want) {
      for (std::size_t k = 0; k < want; ++k) {
        std::swap(pool[k], pool[k + rng.index(pool.size() - k)]);
        out.pairs.push_back(pairs[pool[k]]);
      }
    } else {
      out.with_replacement[s] = true;
      for (std::size_t k = 0; k < want; ++k) out.pairs.push_back(pairs[pool[rng.index(pool.size())]]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labeling

struct PinQuery {
  Signature pin = 0;
  QueryRecord query;
  PairSource source = PairSource::kSearchConsole;
};

struct LabelOptions {
  std::size_t neg_per_pos = 1;
  double relatedness_ceiling = kRelatednessCeiling;
  double promotion_threshold = kNavboostPromotion;
};

struct LabelResult {
  std::vector<LabeledPair> pairs;
  std::size_t promoted = 0;
  std::size_t unresolved_promotions = 0;
};

inline const std::vector<float>& require_embedding(const QueryRecord& q) {
  if (!q.embedding) throw InvalidArgument("query '" + q.text + "' has no embedding");
  return *q.embedding;
}

/// Labels positives +1, promotes navboost pairs above the threshold, and
/// draws `neg_per_pos` distinct unrelated negatives per positive.
inline LabelResult label_pairs(std::span<const PinQuery> positives, std::span<const QueryRecord> pool,
                               std::span<const CandidatePair> navboost, std::uint64_t seed,
                               const LabelOptions& opt = {}) {
  std::map<std::pair<Signature, std::string>, const CandidatePair*> coverage;
  for (const auto& c : navboost) coverage.emplace(std::make_pair(c.pin_signature, c.query_text), &c);
  auto coverage_of = [&](Signature pin, const std::string& text) {
    auto it = coverage.find({pin, text});
    return it == coverage.end() ? 0.0 : it->second->navboost_coverage;
  };

  std::set<std::pair<Signature, std::string>> positive_keys;
  for (const auto& p : positives) positive_keys.emplace(p.pin, p.query.text);

  // Unrelated candidates per distinct anchor text.
  std::unordered_map<std::string, std::vector<std::size_t>> unrelated;
  auto unrelated_to = [&](const QueryRecord& anchor) -> const std::vector<std::size_t>& {
    auto it = unrelated.find(anchor.text);
    if (it != unrelated.end()) return it->second;
    const auto& a = require_embedding(anchor);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool[i].text == anchor.text) continue;
      if (cosine(std::span<const float>(a), std::span<const float>(require_embedding(pool[i]))) <
          opt.relatedness_ceiling) {
        idx.push_back(i);
      }
    }
    return unrelated.emplace(anchor.text, std::move(idx)).first->second;
  };

  LabelResult out;
  Rng rng(seed);
  std::vector<std::string> starved;
  for (const auto& p : positives) {
    out.pairs.push_back({p.pin, p.query, 1, coverage_of(p.pin, p.query.text), p.source});
    if (opt.neg_per_pos == 0) continue;
    std::vector<std::size_t> cand;
    for (std::size_t i : unrelated_to(p.query)) {
      if (!positive_keys.count({p.pin, pool[i].text})) cand.push_back(i);
    }
    if (cand.size() < opt.neg_per_pos) {
      starved.push_back(std::to_string(p.pin) + "/'" + p.query.text + "'");
      continue;
    }
    for (std::size_t k = 0; k < opt.neg_per_pos; ++k) {
      std::swap(cand[k], cand[k + rng.index(cand.size() - k)]);
      const auto& q = pool[cand[k]];
      out.pairs.push_back({p.pin, q, -1, coverage_of(p.pin, q.text), PairSource::kHardNegative});
    }
  }
  if (!starved.empty()) {
    std::string list;
    for (std::size_t i = 0; i < starved.size() && i < 20; ++i) list += (i ? ", " : "") + starved[i];
    if (starved.size() > 20) list += ", ...";
    throw InvalidArgument("label_pairs: not enough unrelated negatives for " + std::to_string(starved.size()) +
                          " positive(s): " + list);
  }

  std::unordered_map<std::string, const QueryRecord*> by_text;
  for (const auto& q : pool) by_text.emplace(q.text, &q);
  std::set<std::pair<Signature, std::string>> promoted_keys;
  for (const auto& c : navboost) {
    if (!(c.navboost_coverage > opt.promotion_threshold)) continue;
    const auto key = std::make_pair(c.pin_signature, c.query_text);
    if (positive_keys.count(key) || !promoted_keys.insert(key).second) continue;
    auto it = by_text.find(c.query_text);
    if (it == by_text.end()) {
      ++out.unresolved_promotions;
      continue;
    }
    out.pairs.push_back({c.pin_signature, *it->second, 1, c.navboost_coverage, c.source});
    ++out.promoted;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Near-duplicate merging

struct DedupResult {
  std::vector<QueryRecord> kept;
  /// Dropped query text -> retained text that absorbed it.
  std::map<std::string, std::string> merged_into;
};

/// Greedy single pass in input order: a query is dropped when its cosine to any
/// already-retained query reaches `threshold`.
inline DedupResult dedup_queries_detailed(std::span<const QueryRecord> queries,
                                          double threshold = kDedupThreshold) {
  DedupResult out;
  std::vector<DenseVector> kept_vecs;
  for (const auto& q : queries) {
    DenseVector v(require_embedding(q));
    if (!kept_vecs.empty() && kept_vecs.front().dim() != v.dim()) {
      throw DimensionError("dedup_queries: embedding dimensions differ");
    }
    std::optional<std::size_t> hit;
    for (std::size_t k = 0; k < kept_vecs.size(); ++k) {
      if (cosine(v, kept_vecs[k]) >= threshold) {
        hit = k;
        break;
      }
    }
    if (hit) {
      out.merged_into.emplace(q.text, out.kept[*hit].text);
    } else {
      kept_vecs.push_back(std::move(v));
      out.kept.push_back(q);
    }
  }
  return out;
}

inline std::vector<QueryRecord> dedup_queries(std::span<const QueryRecord> queries,
                                              double threshold = kDedupThreshold) {
  return dedup_queries_detailed(queries, threshold).kept;
}

// ---------------------------------------------------------------------------
// Corpus-level curation

struct CurationOptions {
  std::size_t top_n = kTopQueriesPerPin;
  double dedup_threshold = kDedupThreshold;
  LabelOptions label;
};

struct CurationReport {
  std::array<std::size_t, 4> branch_counts{};  // indexed by RetainBranch
  std::array<std::size_t, 3> category_histogram{};
  std::size_t dedup_merges = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t promoted = 0;
  std::size_t unresolved_queries = 0;

  Json to_json() const {
    return Json{
        {"retain_branches",
         {{"high_impressions", branch_counts[0]},
          {"high_ctr", branch_counts[1]},
          {"top_position", branch_counts[2]},
          {"rejected", branch_counts[3]}}},
        {"category_histogram",
         {{"Description", category_histogram[0]},
          {"StyleDetail", category_histogram[1]},
          {"UseCase", category_histogram[2]}}},
        {"dedup_merges", dedup_merges},
        {"positives", positives},
        {"negatives", negatives},
        {"promoted", promoted},
        {"unresolved_queries", unresolved_queries},
    };
  }
};

struct CurationResult {
  std::vector<LabeledPair> pairs;
  CurationReport report;
};

/// Retention filter and top-n per pin, dedup of the query set, then labeling.
inline CurationResult curate(const Corpus& corpus, std::uint64_t seed, const CurationOptions& opt = {}) {
  CurationResult out;
  auto& rep = out.report;
  for (const auto& e : corpus.engagement) ++rep.branch_counts[static_cast<std::size_t>(retain_branch(e))];

  const auto dedup = dedup_queries_detailed(corpus.queries, opt.dedup_threshold);
  rep.dedup_merges = dedup.merged_into.size();
  std::unordered_map<std::string, const QueryRecord*> canonical;
  for (const auto& q : dedup.kept) canonical.emplace(q.text, &q);
  auto resolve = [&](const std::string& text) -> const QueryRecord* {
    auto m = dedup.merged_into.find(text);
    auto it = canonical.find(m == dedup.merged_into.end() ? text : m->second);
    return it == canonical.end() ? nullptr : it->second;
  };

  std::map<Signature, std::vector<EngagementRecord>> by_pin;
  for (const auto& e : corpus.engagement) by_pin[e.pin_signature].push_back(e);
  std::vector<PinQuery> positives;
  std::set<std::pair<Signature, std::string>> seen;
  for (const auto& [pin, records] : by_pin) {
    for (const auto& r : select_top_queries(records, opt.top_n)) {
      const QueryRecord* q = resolve(r.query_text);
      if (!q) {
        ++rep.unresolved_queries;
        continue;
      }
      if (!seen.emplace(pin, q->text).second) continue;
      positives.push_back({pin, *q, q->source});
    }
  }
  auto labeled = label_pairs(positives, dedup.kept, corpus.candidates, seed, opt.label);
  out.pairs = std::move(labeled.pairs);
  rep.promoted = labeled.promoted;
  for (const auto& p : out.pairs) {
    if (p.label > 0) {
      ++rep.positives;
      ++rep.category_histogram[category_slot(p.query.category)];
    } else {
      ++rep.negatives;
    }
  }
  return out;
}

}  // namespace geoforge::curation
