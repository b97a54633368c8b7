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
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geoforge/core/binary_io.hpp"
#include "geoforge/core/error.hpp"
#include "geoforge/core/rng.hpp"
#include "geoforge/core/vector_math.hpp"

namespace geoforge::ann {

using ElementId = std::uint64_t;

struct HnswParams {
  std::size_t M = 16;
  std::size_t ef_construction = 200;
  std::size_t ef_search = 100;
  /// Level multiplier; 0 selects 1/ln(M).
  double mL = 0.0;
  /// Back-fill heuristic selections with the closest pruned candidates.
  bool keep_pruned = true;

  double level_multiplier() const { return mL > 0.0 ? mL : 1.0 / std::log(double(M)); }
  std::size_t max_degree(std::size_t level) const { return level == 0 ? 2 * M : M; }

  void validate() const {
    if (M < 2) throw InvalidArgument("HNSW: M must be at least 2");
    if (ef_construction < M) throw InvalidArgument("HNSW: ef_construction must be >= M");
    if (ef_search < 1) throw InvalidArgument("HNSW: ef_search must be >= 1");
    if (mL < 0.0 || !std::isfinite(mL)) throw InvalidArgument("HNSW: mL must be a finite non-negative value");
  }
};

struct Neighbor {
  ElementId id = 0;
  double similarity = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct SearchStats {
  std::size_t distance_computations = 0;
};

inline constexpr double kUnitNormTolerance = 1e-5;
inline constexpr char kIndexMagic[] = "GEOHNSW1";
inline constexpr std::uint32_t kIndexVersion = 1;

/// Orders by descending similarity, then ascending id.
inline bool better(const Neighbor& a, const Neighbor& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

/// Hierarchical navigable small-world graph over unit vectors, scored by
/// cosine (dot product). Searches are const and may run concurrently;
/// inserts need exclusive access.
class HnswIndex {
 public:
  HnswIndex() : HnswIndex(0, HnswParams{}, 0) {}
  HnswIndex(std::size_t dim, HnswParams params, std::uint64_t seed)
      : params_(params), dim_(dim), rng_(seed) {
    params_.validate();
  }

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::size_t dim() const { return dim_; }
  const HnswParams& params() const { return params_; }
  std::optional<ElementId> entry_point() const {
    if (!entry_) return std::nullopt;
    return ids_[*entry_];
  }
  std::size_t max_level() const { return max_level_; }
  bool contains(ElementId id) const { return slot_.count(id) != 0; }

  void insert(ElementId id, std::span<const float> v) {
    if (dim_ == 0 && ids_.empty()) dim_ = v.size();
    if (v.size() != dim_) {
      throw DimensionError("HNSW: vector has dimension " + std::to_string(v.size()) + ", index has " +
                           std::to_string(dim_));
    }
    if (std::abs(l2_norm(v) - 1.0) > kUnitNormTolerance) {
      throw InvalidArgument("HNSW: vector for id " + std::to_string(id) + " is not unit-norm");
    }
    if (slot_.count(id)) throw DuplicateIdError("HNSW: duplicate id " + std::to_string(id));

    const auto node = static_cast<std::uint32_t>(ids_.size());
    const auto level = static_cast<std::size_t>(std::floor(-std::log(rng_.uniform_open0()) * params_.level_multiplier()));
    ids_.push_back(id);
    slot_.emplace(id, node);
    data_.insert(data_.end(), v.begin(), v.end());
    links_.emplace_back(level + 1);

    if (!entry_) {
      entry_ = node;
      max_level_ = level;
      return;
    }
    std::size_t counter = 0;
    std::uint32_t ep = *entry_;
    for (std::size_t l = max_level_; l > level; --l) ep = greedy_closest(vec(node), ep, l, counter);
    std::vector<Candidate> eps{{distance(vec(node), ep, counter), ep}};
    for (std::size_t l = std::min(level, max_level_) + 1; l-- > 0;) {
      auto found = search_layer(vec(node), eps, params_.ef_construction, l, counter);
      auto chosen = select_neighbors(found, params_.M, counter);
      links_[node][l].clear();
      for (const auto& c : chosen) links_[node][l].push_back(c.node);
      for (const auto& c : chosen) connect(c.node, node, l, counter);
      eps = std::move(found);
    }
    if (level > max_level_) {
      max_level_ = level;
      entry_ = node;
    }
  }

  void insert(ElementId id, const DenseVector& v) { insert(id, v.span()); }

  /// Up to k elements by descending cosine; ef below k is raised to k.
  std::vector<Neighbor> search(std::span<const float> query, std::size_t k, std::size_t ef = 0,
                               SearchStats* stats = nullptr) const {
    if (!ids_.empty() && query.size() != dim_) {
      throw DimensionError("HNSW: query has dimension " + std::to_string(query.size()) + ", index has " +
                           std::to_string(dim_));
    }
    std::size_t counter = 0;
    std::vector<Neighbor> out;
    if (entry_ && k > 0) {
      const std::size_t width = std::max(ef == 0 ? params_.ef_search : ef, k);
      std::uint32_t ep = *entry_;
      for (std::size_t l = max_level_; l > 0; --l) ep = greedy_closest(query, ep, l, counter);
      std::vector<Candidate> eps{{distance(query, ep, counter), ep}};
      auto found = search_layer(query, eps, width, 0, counter);
      for (const auto& c : found) out.push_back({ids_[c.node], dot(query, vec(c.node))});
      std::sort(out.begin(), out.end(), better);
      if (out.size() > k) out.resize(k);
    }
    if (stats) stats->distance_computations += counter;
    return out;
  }

  std::vector<Neighbor> search(const DenseVector& q, std::size_t k, std::size_t ef = 0,
                               SearchStats* stats = nullptr) const {
    return search(q.span(), k, ef, stats);
  }

  std::span<const float> vector_of(ElementId id) const {
    auto it = slot_.find(id);
    if (it == slot_.end()) throw InvalidArgument("HNSW: unknown id " + std::to_string(id));
    return vec(it->second);
  }

  /// Element ids in insertion order.
  const std::vector<ElementId>& ids() const { return ids_; }

  /// Neighbor ids of `id` at `level` (empty above the node's level).
  std::vector<ElementId> neighbors(ElementId id, std::size_t level) const {
    const auto node = slot_.at(id);
    std::vector<ElementId> out;
    if (level < links_[node].size()) {
      for (auto n : links_[node][level]) out.push_back(ids_[n]);
    }
    return out;
  }
  std::size_t level_of(ElementId id) const { return links_[slot_.at(id)].size() - 1; }

  /// Full structural sweep; returns a description of every violation found.
  std::vector<std::string> check_invariants() const {
    std::vector<std::string> errs;
    if (ids_.empty()) {
      if (entry_) errs.push_back("empty index has an entry point");
      return errs;
    }
    if (!entry_ || *entry_ >= ids_.size()) {
      errs.push_back("missing entry point");
      return errs;
    }
    if (links_[*entry_].size() != max_level_ + 1) errs.push_back("entry point is not on the top level");
    for (std::uint32_t n = 0; n < links_.size(); ++n) {
      if (links_[n].empty()) errs.push_back("node " + std::to_string(ids_[n]) + " has no layer 0");
      if (links_[n].size() > max_level_ + 1) errs.push_back("node " + std::to_string(ids_[n]) + " above max level");
      for (std::size_t l = 0; l < links_[n].size(); ++l) {
        const auto& adj = links_[n][l];
        if (adj.size() > params_.max_degree(l)) {
          errs.push_back("node " + std::to_string(ids_[n]) + " exceeds degree at level " + std::to_string(l));
        }
        std::vector<std::uint32_t> sorted = adj;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
          errs.push_back("node " + std::to_string(ids_[n]) + " has duplicate edges at level " + std::to_string(l));
        }
        for (auto m : adj) {
          if (m == n) errs.push_back("self-loop at node " + std::to_string(ids_[n]));
          if (m >= links_.size()) {
            errs.push_back("dangling edge from " + std::to_string(ids_[n]));
          } else if (links_[m].size() <= l) {
            errs.push_back("edge at level " + std::to_string(l) + " to node " + std::to_string(ids_[m]) +
                           " which is not on that level");
          }
        }
      }
    }
    return errs;
  }

  // -- persistence ----------------------------------------------------------

  std::string serialize() const {
    BinaryWriter w;
    w.bytes(kIndexMagic, 8);
    w.u32(kIndexVersion);
    w.u32(static_cast<std::uint32_t>(dim_));
    w.u32(static_cast<std::uint32_t>(params_.M));
    w.u32(static_cast<std::uint32_t>(params_.ef_construction));
    w.u32(static_cast<std::uint32_t>(params_.ef_search));
    w.f64(params_.mL);
    w.u32(params_.keep_pruned ? 1 : 0);
    w.str(rng_.state());
    w.u32(static_cast<std::uint32_t>(ids_.size()));
    w.u32(static_cast<std::uint32_t>(max_level_));
    w.u32(entry_ ? *entry_ : std::numeric_limits<std::uint32_t>::max());
    for (std::uint32_t n = 0; n < ids_.size(); ++n) {
      w.u64(ids_[n]);
      w.u32(static_cast<std::uint32_t>(links_[n].size() - 1));
      for (float x : vec(n)) w.f32(x);
    }
    for (std::uint32_t n = 0; n < ids_.size(); ++n) {
      for (const auto& adj : links_[n]) {
        w.u32(static_cast<std::uint32_t>(adj.size()));
        for (auto m : adj) w.u32(m);
      }
    }
    return w.data();
  }

  void save(const std::filesystem::path& path) const {
    BinaryWriter w;
    const auto bytes = serialize();
    w.bytes(bytes.data(), bytes.size());
    w.save(path);
  }

  static HnswIndex parse(BinaryReader r) {
    r.expect_magic(std::string_view(kIndexMagic, 8));
    const auto version = r.u32();
    if (version != kIndexVersion) {
      throw FormatError(r.source() + ": index version mismatch (file " + std::to_string(version) + ", expected " +
                        std::to_string(kIndexVersion) + ")");
    }
    HnswParams p;
    const std::size_t dim = r.u32();
    p.M = r.u32();
    p.ef_construction = r.u32();
    p.ef_search = r.u32();
    p.mL = r.f64();
    p.keep_pruned = r.u32() != 0;
    HnswIndex idx(dim, p, 0);
    try {
      idx.rng_.restore(r.str());
    } catch (const std::invalid_argument&) {
      throw FormatError(r.source() + ": corrupt generator state");
    }
    const std::uint32_t n = r.u32();
    idx.max_level_ = r.u32();
    const std::uint32_t entry = r.u32();
    if (n > 0) {
      if (entry >= n) throw FormatError(r.source() + ": entry point out of range");
      idx.entry_ = entry;
    }
    idx.data_.reserve(std::size_t(n) * dim);
    for (std::uint32_t i = 0; i < n; ++i) {
      const ElementId id = r.u64();
      const std::uint32_t level = r.u32();
      if (level > idx.max_level_) throw FormatError(r.source() + ": node level above max level");
      if (!idx.slot_.emplace(id, i).second) throw FormatError(r.source() + ": duplicate id in element table");
      idx.ids_.push_back(id);
      idx.links_.emplace_back(level + 1);
      for (std::size_t d = 0; d < dim; ++d) idx.data_.push_back(r.f32());
    }
    for (std::uint32_t i = 0; i < n; ++i) {
      for (auto& adj : idx.links_[i]) {
        const std::uint32_t deg = r.u32();
        if (deg > 2 * p.M) throw FormatError(r.source() + ": adjacency degree out of range");
        adj.resize(deg);
        for (auto& m : adj) {
          m = r.u32();
          if (m >= n) throw FormatError(r.source() + ": edge endpoint out of range");
        }
      }
    }
    if (!r.at_end()) throw FormatError(r.source() + ": trailing bytes after index");
    return idx;
  }

  static HnswIndex load(const std::filesystem::path& path) { return parse(BinaryReader::from_file(path)); }

 private:
  struct Candidate {
    double dist;
    std::uint32_t node;
  };
  struct Closer {
    bool operator()(const Candidate& a, const Candidate& b) const {
      return a.dist != b.dist ? a.dist > b.dist : a.node > b.node;
    }
  };
  struct Farther {
    bool operator()(const Candidate& a, const Candidate& b) const {
      return a.dist != b.dist ? a.dist < b.dist : a.node < b.node;
    }
  };

  std::span<const float> vec(std::uint32_t node) const { return {data_.data() + std::size_t(node) * dim_, dim_}; }

  double distance(std::span<const float> q, std::uint32_t node, std::size_t& counter) const {
    ++counter;
    const float* v = data_.data() + std::size_t(node) * dim_;
    double acc = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) acc += double(q[i]) * double(v[i]);
    return 1.0 - acc;
  }

  double distance(std::uint32_t a, std::uint32_t b, std::size_t& counter) const { return distance(vec(a), b, counter); }

  std::uint32_t greedy_closest(std::span<const float> q, std::uint32_t ep, std::size_t level,
                               std::size_t& counter) const {
    double best = distance(q, ep, counter);
    for (bool moved = true; moved;) {
      moved = false;
      for (auto n : links_[ep][level]) {
        const double d = distance(q, n, counter);
        if (d < best || (d == best && n < ep)) {
          best = d;
          ep = n;
          moved = true;
        }
      }
    }
    return ep;
  }

  /// Best-first beam search on one layer; returns up to `ef` nodes sorted by
  /// ascending distance.
  std::vector<Candidate> search_layer(std::span<const float> q, const std::vector<Candidate>& entry, std::size_t ef,
                                      std::size_t level, std::size_t& counter) const {
    std::vector<bool> visited(ids_.size(), false);
    std::priority_queue<Candidate, std::vector<Candidate>, Closer> frontier;
    std::priority_queue<Candidate, std::vector<Candidate>, Farther> best;
    for (const auto& c : entry) {
      if (visited[c.node]) continue;
      visited[c.node] = true;
      frontier.push(c);
      best.push(c);
      if (best.size() > ef) best.pop();
    }
    while (!frontier.empty()) {
      const Candidate cur = frontier.top();
      if (best.size() >= ef && cur.dist > best.top().dist) break;
      frontier.pop();
      for (auto n : links_[cur.node][level]) {
        if (visited[n]) continue;
        visited[n] = true;
        const double d = distance(q, n, counter);
        if (best.size() < ef || d < best.top().dist) {
          frontier.push({d, n});
          best.push({d, n});
          if (best.size() > ef) best.pop();
        }
      }
    }
    std::vector<Candidate> out;
    out.reserve(best.size());
    while (!best.empty()) {
      out.push_back(best.top());
      best.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  /// Diversity heuristic: keep a candidate only if it is closer to the base
  /// than to every neighbor already kept. `sorted` is ascending by distance.
  std::vector<Candidate> select_neighbors(const std::vector<Candidate>& sorted, std::size_t m,
                                          std::size_t& counter) const {
    std::vector<Candidate> kept;
    std::vector<Candidate> pruned;
    for (const auto& c : sorted) {
      if (kept.size() >= m) break;
      bool diverse = true;
      for (const auto& r : kept) {
        if (distance(c.node, r.node, counter) < c.dist) {
          diverse = false;
          break;
        }
      }
      if (diverse) {
        kept.push_back(c);
      } else if (params_.keep_pruned) {
        pruned.push_back(c);
      }
    }
    for (std::size_t i = 0; i < pruned.size() && kept.size() < m; ++i) kept.push_back(pruned[i]);
    return kept;
  }

  void connect(std::uint32_t from, std::uint32_t to, std::size_t level, std::size_t& counter) {
    auto& adj = links_[from][level];
    if (std::find(adj.begin(), adj.end(), to) != adj.end()) return;
    adj.push_back(to);
    const std::size_t cap = params_.max_degree(level);
    if (adj.size() <= cap) return;
    std::vector<Candidate> cands;
    cands.reserve(adj.size());
    for (auto n : adj) cands.push_back({distance(from, n, counter), n});
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.dist != b.dist ? a.dist < b.dist : a.node < b.node;
    });
    const auto kept = select_neighbors(cands, cap, counter);
    adj.clear();
    for (const auto& c : kept) adj.push_back(c.node);
  }

  HnswParams params_;
  std::size_t dim_;
  Rng rng_;
  std::vector<ElementId> ids_;
  std::unordered_map<ElementId, std::uint32_t> slot_;
  std::vector<float> data_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // node -> level -> neighbors
  std::optional<std::uint32_t> entry_;
  std::size_t max_level_ = 0;
};

/// Builds by inserting in ascending id order.
inline HnswIndex build(const std::map<ElementId, DenseVector>& vectors, const HnswParams& params,
                       std::uint64_t seed) {
  std::size_t dim = vectors.empty() ? 0 : vectors.begin()->second.dim();
  HnswIndex idx(dim, params, seed);
  for (const auto& [id, v] : vectors) idx.insert(id, v);
  return idx;
}

/// Exact top-k by cosine, ties broken by ascending id.
inline std::vector<Neighbor> brute_force_search(const std::map<ElementId, DenseVector>& vectors,
                                                std::span<const float> query, std::size_t k) {
  std::vector<Neighbor> all;
  all.reserve(vectors.size());
  for (const auto& [id, v] : vectors) {
    if (v.dim() != query.size()) {
      throw DimensionError("brute_force_search: query has dimension " + std::to_string(query.size()) +
                           ", element " + std::to_string(id) + " has " + std::to_string(v.dim()));
    }
    all.push_back({id, dot(v.span(), query)});
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(n), all.end(), better);
  all.resize(n);
  return all;
}

/// Fraction of the exact top-k ids present in `approx`.
inline double recall_at_k(const std::vector<Neighbor>& approx, const std::vector<Neighbor>& exact) {
  if (exact.empty()) return 1.0;
  std::size_t hit = 0;
  for (const auto& e : exact) {
    for (const auto& a : approx) {
      if (a.id == e.id) {
        ++hit;
        break;
      }
    }
  }
  return double(hit) / double(exact.size());
}

}  // namespace geoforge::ann
