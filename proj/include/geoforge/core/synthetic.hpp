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
#include <set>
#include <string>
#include <vector>

#include "geoforge/core/corpus.hpp"
#include "geoforge/core/rng.hpp"
#include "geoforge/core/text.hpp"

namespace geoforge::synthetic {

/// A cluster of the generated corpus: a two-word core phrase, six extra
/// words no other theme uses, and the taxonomy category it belongs to.
struct Theme {
  const char* category;
  const char* core;
  std::array<const char*, 6> extras;
};

// clang-format off
inline constexpr Theme kThemes[] = {
    {"fashion",   "sage green",        {"monochrome", "blazer", "trousers", "knit", "cardigan", "loafers"}},
    {"beauty",    "fall nails",        {"burgundy", "chrome", "almond", "manicure", "glitter", "tips"}},
    {"home",      "farmhouse kitchen", {"shiplap", "island", "pendant", "butcher", "countertop", "sink"}},
    {"wedding",   "boho wedding",      {"pampas", "arch", "macrame", "bouquet", "veil", "barn"}},
    {"garden",    "cottage garden",    {"foxglove", "hollyhock", "trellis", "border", "path", "roses"}},
    {"food",      "sourdough bread",   {"starter", "crumb", "scoring", "loaf", "banneton", "crust"}},
    {"home",      "japandi bedroom",   {"tatami", "futon", "paper", "lantern", "oak", "minimal"}},
    {"beauty",    "curtain bangs",     {"layers", "blowout", "shag", "bob", "fringe", "balayage"}},
    {"travel",    "amalfi coast",      {"positano", "lemon", "cliffside", "ferry", "terrace", "villa"}},
    {"fitness",   "pilates workout",   {"reformer", "core", "mat", "stretch", "glutes", "posture"}},
    {"art",       "fineline tattoo",   {"botanical", "wrist", "ankle", "script", "tiny", "sternum"}},
    {"home",      "neutral nursery",   {"crib", "mobile", "rocker", "muslin", "pastel", "bassinet"}},
    {"food",      "spritz cocktail",   {"aperol", "prosecco", "garnish", "citrus", "orange", "glassware"}},
    {"holidays",  "halloween costume", {"witch", "vampire", "skeleton", "pumpkin", "spooky", "cape"}},
    {"holidays",  "christmas tree",    {"ornaments", "garland", "tinsel", "star", "ribbon", "flocked"}},
    {"home",      "home office",       {"desk", "monitor", "ergonomic", "shelving", "cable", "chair"}},
    {"home",      "spa bathroom",      {"freestanding", "tub", "terrazzo", "eucalyptus", "towels", "vanity"}},
    {"beauty",    "glass skin",        {"dewy", "serum", "highlighter", "glow", "primer", "moisturizer"}},
    {"art",       "resin art",         {"epoxy", "coaster", "geode", "pour", "pigment", "mold"}},
    {"events",    "birthday party",    {"balloon", "cake", "banner", "confetti", "favors", "streamers"}},
    {"garden",    "patio lighting",    {"string", "bulbs", "pergola", "sconces", "firepit", "deck"}},
    {"food",      "meal prep",         {"bento", "containers", "quinoa", "chicken", "macros", "lunches"}},
    {"home",      "mid century",       {"walnut", "credenza", "sideboard", "teak", "sofa", "armchair"}},
    {"holidays",  "thanksgiving tablescape", {"gourds", "placemats", "candlesticks", "runner", "napkins", "centerpiece"}},
};

/// Themes whose words never appear in a generated corpus.
inline constexpr Theme kHeldOutThemes[] = {
    {"autos",     "electric vehicle",  {"charging", "battery", "sedan", "range", "motor", "torque"}},
    {"finance",   "stock market",      {"dividend", "portfolio", "index", "bonds", "yield", "broker"}},
    {"tech",      "kubernetes cluster", {"container", "pods", "helm", "deployment", "ingress", "nodes"}},
    {"science",   "solar eclipse",     {"telescope", "corona", "totality", "umbra", "orbit", "lunar"}},
};
// clang-format on

inline constexpr std::size_t kThemeCount = std::size(kThemes);

struct GeneratorConfig {
  std::size_t num_pins = 1000;
  std::size_t num_themes = kThemeCount;
  Dims dims;
  std::uint64_t seed = 42;
  /// Ratio of per-pin visual noise norm to the cluster centroid norm.
  double visual_noise = 1.0;
  std::size_t board_size = 8;
  std::size_t queries_per_pin = 14;
};

inline std::string description_query(const Theme& t, std::size_t a, std::size_t b) {
  return std::string(t.core) + " " + t.extras[a] + " " + t.extras[b];
}
inline std::string style_query(const Theme& t, std::size_t a) {
  return std::string(t.core) + " " + t.extras[a] + " aesthetic";
}
inline std::string usecase_query(const Theme& t, std::size_t a, std::size_t b) {
  return std::string(t.extras[a]) + " " + t.core + " ideas for " + t.extras[b];
}
/// Collection topics: core phrase plus one extra word.
inline std::string topic_text(const Theme& t, std::size_t a) {
  return std::string(t.core) + " " + t.extras[a];
}

/// Every query the generator knows for a theme, in a fixed order.
inline std::vector<QueryRecord> theme_queries(const Theme& t, std::size_t text_dim) {
  std::vector<QueryRecord> out;
  auto add = [&](std::string text, QueryCategory c) {
    QueryRecord q;
    q.text = std::move(text);
    q.category = c;
    q.embedding = hashed_text_embedding(q.text, text_dim).values;
    out.push_back(std::move(q));
  };
  for (std::size_t a = 0; a < 6; a += 2) {
    add(description_query(t, a, a + 1), QueryCategory::kDescription);
    add(description_query(t, a, (a + 3) % 6), QueryCategory::kDescription);
  }
  for (std::size_t a = 0; a < 6; ++a) add(style_query(t, a), QueryCategory::kStyleDetail);
  for (std::size_t a = 0; a < 6; ++a) {
    add(usecase_query(t, a, (a + 1) % 6), QueryCategory::kUseCase);
    add(usecase_query(t, a, (a + 4) % 6), QueryCategory::kUseCase);
  }
  for (std::size_t a = 0; a < 2; ++a) add(topic_text(t, a), QueryCategory::kDescription);
  return out;
}

inline std::vector<std::string> in_cluster_topics(std::size_t num_themes = kThemeCount) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < num_themes; ++i) {
    for (std::size_t a = 0; a < 2; ++a) out.push_back(topic_text(kThemes[i], a));
  }
  return out;
}

inline std::vector<std::string> off_cluster_topics() {
  std::vector<std::string> out;
  for (const auto& t : kHeldOutThemes) {
    for (std::size_t a = 0; a < 2; ++a) out.push_back(topic_text(t, a));
  }
  return out;
}

/// Theme index of a generated pin, recovered from its description.
inline std::size_t theme_of(const PinRecord& p) {
  for (std::size_t i = 0; i < kThemeCount; ++i) {
    if (p.description == kThemes[i].core) return i;
  }
  throw InvalidArgument("pin " + std::to_string(p.signature) + " is not from a generated theme");
}

inline std::vector<float> random_unit(Rng& rng, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return l2_normalized(v);
}

/// Clustered synthetic corpus: pins are spread round-robin over themes with
/// visual embeddings scattered around a per-theme centroid and text
/// embeddings hashed from a title built of theme words.
inline Corpus generate_corpus(const GeneratorConfig& cfg) {
  if (cfg.num_themes == 0 || cfg.num_themes > kThemeCount) {
    throw InvalidArgument("num_themes must be in [1, " + std::to_string(kThemeCount) + "]");
  }
  Rng rng(derive_seed(cfg.seed, SeedOffset::kCorpus));
  Corpus c;
  c.dims = cfg.dims;
  c.seed = cfg.seed;

  std::vector<std::vector<float>> centroids;
  for (std::size_t t = 0; t < cfg.num_themes; ++t) centroids.push_back(random_unit(rng, cfg.dims.visual));

  std::vector<std::vector<QueryRecord>> per_theme;
  for (std::size_t t = 0; t < cfg.num_themes; ++t) {
    per_theme.push_back(theme_queries(kThemes[t], cfg.dims.text));
    for (const auto& q : per_theme.back()) c.queries.push_back(q);
  }

  std::vector<std::size_t> theme_fill(cfg.num_themes, 0);
  const double noise_scale = cfg.visual_noise / std::sqrt(double(cfg.dims.visual));
  for (std::size_t i = 0; i < cfg.num_pins; ++i) {
    const std::size_t t = i % cfg.num_themes;
    const Theme& theme = kThemes[t];
    PinRecord p;
    p.signature = 1000 + i;
    std::vector<float> v(cfg.dims.visual);
    for (std::size_t d = 0; d < v.size(); ++d) {
      v[d] = static_cast<float>(centroids[t][d] + noise_scale * rng.normal());
    }
    p.visual_embedding = l2_normalized(v);
    std::size_t a = rng.index(6), b = rng.index(5);
    if (b >= a) ++b;
    p.title = std::string(theme.core) + " " + theme.extras[a] + " " + theme.extras[b];
    p.description = theme.core;
    p.text_embedding = hashed_text_embedding(p.title, cfg.dims.text).values;
    p.perception_score = static_cast<float>(rng.uniform(0.3, 1.0));
    p.board_id = t * 1000 + theme_fill[t]++ / std::max<std::size_t>(cfg.board_size, 1);
    p.category = theme.category;
    c.pins.push_back(std::move(p));
  }

  for (const auto& p : c.pins) {
    const std::size_t t = theme_of(p);
    const auto& qs = per_theme[t];
    std::vector<std::size_t> order(qs.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    rng.shuffle(std::span<std::size_t>(order));
    const std::size_t n = std::min(cfg.queries_per_pin, order.size());
    for (std::size_t k = 0; k < n; ++k) {
      EngagementRecord e;
      e.query_text = qs[order[k]].text;
      e.pin_signature = p.signature;
      e.impressions = static_cast<std::uint64_t>(std::exp(rng.uniform(0.0, 8.0)));
      const double ctr = rng.bernoulli(0.1) ? rng.uniform(0.8, 1.0) : rng.uniform(0.0, 0.3);
      e.clicks = static_cast<std::uint64_t>(std::floor(ctr * double(e.impressions)));
      e.avg_position = 1.0 + std::floor(rng.uniform(0.0, 40.0) * 10.0) / 10.0;
      c.engagement.push_back(std::move(e));
    }
    // Weak cross-theme records, filtered out by retention.
    const std::size_t other = (t + 1 + rng.index(cfg.num_themes > 1 ? cfg.num_themes - 1 : 1)) % cfg.num_themes;
    if (other != t) {
      EngagementRecord e;
      e.query_text = per_theme[other][rng.index(per_theme[other].size())].text;
      e.pin_signature = p.signature;
      e.impressions = rng.index(10);
      e.clicks = 0;
      e.avg_position = 30.0 + rng.index(20);
      c.engagement.push_back(std::move(e));
    }
    for (std::size_t k = 0; k < 3; ++k) {
      CandidatePair cp;
      cp.pin_signature = p.signature;
      cp.query_text = qs[order[(n + k) % order.size()]].text;
      cp.navboost_coverage = std::round(rng.uniform() * 1000.0) / 1000.0;
      cp.source = PairSource::kSynthetic;
      c.candidates.push_back(std::move(cp));
    }
  }
  c.index();
  return c;
}

}  // namespace geoforge::synthetic
