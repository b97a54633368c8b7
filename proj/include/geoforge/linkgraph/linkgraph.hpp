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
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "geoforge/collections/collections.hpp"
#include "geoforge/core/error.hpp"
#include "geoforge/core/records.hpp"
#include "geoforge/core/text.hpp"

namespace geoforge::linkgraph {

enum class NodeKind { kCollection, kPin };

/// A page: either a collection (by slug) or a pin (by signature). Ordering
/// puts collections first by slug, then pins by signature.
struct PageId {
  NodeKind kind = NodeKind::kPin;
  Signature signature = 0;
  std::string slug;

  static PageId pin(Signature s) { return {NodeKind::kPin, s, {}}; }
  static PageId collection(std::string slug) { return {NodeKind::kCollection, 0, std::move(slug)}; }

  bool is_pin() const { return kind == NodeKind::kPin; }
  std::string path() const { return is_pin() ? "/pin/" + std::to_string(signature) : "/collection/" + slug; }

  friend bool operator==(const PageId&, const PageId&) = default;
  friend bool operator<(const PageId& a, const PageId& b) {
    return std::tie(a.kind, a.slug, a.signature) < std::tie(b.kind, b.slug, b.signature);
  }
};

/// Directed page graph with adjacency in both directions.
class LinkGraph {
 public:
  /// Returns the node index, adding the node if new. Indices are stable.
  std::uint32_t add_node(const PageId& id) {
    auto [it, inserted] = index_.emplace(id, std::uint32_t(nodes_.size()));
    if (inserted) {
      nodes_.push_back(id);
      out_.emplace_back();
      in_.emplace_back();
    }
    return it->second;
  }

  /// Adds a → b; false for self-loops and existing edges.
  bool add_edge(const PageId& a, const PageId& b) {
    if (a == b) return false;
    const auto u = add_node(a), v = add_node(b);
    auto& adj = out_[u];
    if (std::find(adj.begin(), adj.end(), v) != adj.end()) return false;
    adj.push_back(v);
    in_[v].push_back(u);
    ++edges_;
    return true;
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_; }
  const std::vector<PageId>& nodes() const { return nodes_; }
  const std::vector<std::uint32_t>& out(std::uint32_t u) const { return out_[u]; }
  const std::vector<std::uint32_t>& in(std::uint32_t u) const { return in_[u]; }
  bool contains(const PageId& id) const { return index_.count(id) != 0; }
  std::uint32_t index_of(const PageId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw InvalidArgument("link graph has no node " + id.path());
    return it->second;
  }
  bool has_edge(const PageId& a, const PageId& b) const {
    if (!contains(a) || !contains(b)) return false;
    const auto& adj = out_[index_of(a)];
    return std::find(adj.begin(), adj.end(), index_of(b)) != adj.end();
  }

  /// Node indices in page order (collections by slug, then pins).
  std::vector<std::uint32_t> sorted_indices() const {
    std::vector<std::uint32_t> out;
    for (const auto& [id, i] : index_) out.push_back(i);
    return out;
  }

 private:
  std::vector<PageId> nodes_;
  std::map<PageId, std::uint32_t> index_;
  std::vector<std::vector<std::uint32_t>> out_;
  std::vector<std::vector<std::uint32_t>> in_;
  std::size_t edges_ = 0;
};

struct Annotation {
  Signature pin = 0;
  std::string query;
};

struct BuildReport {
  std::size_t resolved = 0;
  std::vector<Annotation> dangling;
};

struct BuildResult {
  LinkGraph graph;
  BuildReport report;
};

/// Hub-and-spoke topology: every collection links to its members, and each
/// annotation whose slug names a collection adds pin → collection plus the
/// reciprocal backlink. `pins` adds pin pages that may end up unlinked.
inline BuildResult build_link_graph(const std::vector<Annotation>& annotations,
                                    const std::vector<collections::Collection>& cols,
                                    const std::vector<Signature>& pins = {}) {
  BuildResult r;
  std::map<std::string, const collections::Collection*> by_slug;
  for (const auto& c : cols) {
    if (!by_slug.emplace(c.slug, &c).second) throw DuplicateIdError("duplicate collection slug '" + c.slug + "'");
  }
  // Insert nodes in page order so indices follow the sitemap order.
  std::vector<PageId> all;
  for (const auto& c : cols) all.push_back(PageId::collection(c.slug));
  for (auto s : pins) all.push_back(PageId::pin(s));
  for (const auto& c : cols) {
    for (const auto& m : c.members) all.push_back(PageId::pin(m.signature));
  }
  for (const auto& a : annotations) all.push_back(PageId::pin(a.pin));
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  for (const auto& id : all) r.graph.add_node(id);

  for (const auto& c : cols) {
    for (const auto& m : c.members) r.graph.add_edge(PageId::collection(c.slug), PageId::pin(m.signature));
  }
  for (const auto& a : annotations) {
    auto it = by_slug.find(slugify(a.query));
    if (it == by_slug.end()) {
      r.report.dangling.push_back(a);
      continue;
    }
    ++r.report.resolved;
    const auto col = PageId::collection(it->first);
    r.graph.add_edge(PageId::pin(a.pin), col);
    r.graph.add_edge(col, PageId::pin(a.pin));
  }
  return r;
}

// ---------------------------------------------------------------------------
// PageRank

struct PageRankOptions {
  double damping = 0.85;
  double tolerance = 1e-10;
  std::size_t max_iterations = 200;
};

struct AuthorityScores {
  std::vector<double> scores;  // by node index
  double damping = 0.0;
  std::size_t iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

/// Power iteration with uniform teleport; dangling nodes spread their mass
/// uniformly. Stops once the L1 change drops below tolerance.
inline AuthorityScores pagerank(const LinkGraph& g, const PageRankOptions& opt = {}) {
  if (g.node_count() == 0) throw InvalidArgument("pagerank: graph is empty");
  if (!(opt.damping > 0.0 && opt.damping < 1.0)) throw InvalidArgument("pagerank: damping must lie in (0, 1)");
  const std::size_t n = g.node_count();
  const double inv_n = 1.0 / double(n);
  AuthorityScores r;
  r.damping = opt.damping;
  std::vector<double> x(n, inv_n), next(n);
  for (r.iterations = 0; r.iterations < opt.max_iterations;) {
    double dangling = 0.0;
    for (std::uint32_t u = 0; u < n; ++u) {
      if (g.out(u).empty()) dangling += x[u];
    }
    const double base = (1.0 - opt.damping) * inv_n + opt.damping * dangling * inv_n;
    for (std::uint32_t v = 0; v < n; ++v) {
      double s = 0.0;
      for (auto u : g.in(v)) s += x[u] / double(g.out(u).size());
      next[v] = base + opt.damping * s;
    }
    r.residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) r.residual += std::abs(next[i] - x[i]);
    x.swap(next);
    ++r.iterations;
    if (r.residual < opt.tolerance) {
      r.converged = true;
      break;
    }
  }
  r.scores = std::move(x);
  return r;
}

// ---------------------------------------------------------------------------
// Reports

inline std::size_t orphan_pins(const LinkGraph& g) {
  std::size_t n = 0;
  for (std::uint32_t u = 0; u < g.node_count(); ++u) n += g.nodes()[u].is_pin() && g.in(u).empty();
  return n;
}

/// Mean score over collection pages; 0 when there are none.
inline double mean_collection_authority(const LinkGraph& g, const AuthorityScores& s) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::uint32_t u = 0; u < g.node_count(); ++u) {
    if (!g.nodes()[u].is_pin()) {
      sum += s.scores[u];
      ++n;
    }
  }
  return n ? sum / double(n) : 0.0;
}

inline Json link_report(const LinkGraph& g, const AuthorityScores& s) {
  if (s.scores.size() != g.node_count()) throw InvalidArgument("link_report: scores do not cover the graph");
  auto order = g.sorted_indices();
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.scores[a] > s.scores[b]; });
  Json nodes = Json::array();
  for (auto u : order) {
    nodes.push_back({{"page", g.nodes()[u].path()},
                     {"authority", s.scores[u]},
                     {"in_degree", g.in(u).size()},
                     {"out_degree", g.out(u).size()}});
  }
  std::map<std::size_t, std::size_t> in_hist, out_hist;
  for (std::uint32_t u = 0; u < g.node_count(); ++u) {
    ++in_hist[g.in(u).size()];
    ++out_hist[g.out(u).size()];
  }
  auto hist = [](const std::map<std::size_t, std::size_t>& h) {
    Json j = Json::object();
    for (const auto& [deg, count] : h) j[std::to_string(deg)] = count;
    return j;
  };
  std::size_t pins = 0;
  for (const auto& id : g.nodes()) pins += id.is_pin();
  return Json{{"node_count", g.node_count()},
              {"edge_count", g.edge_count()},
              {"pin_count", pins},
              {"collection_count", g.node_count() - pins},
              {"orphan_pins", orphan_pins(g)},
              {"mean_collection_authority", mean_collection_authority(g, s)},
              {"damping", s.damping},
              {"iterations", s.iterations},
              {"residual", s.residual},
              {"converged", s.converged},
              {"in_degree_histogram", hist(in_hist)},
              {"out_degree_histogram", hist(out_hist)},
              {"nodes", nodes}};
}

/// One JSON object per edge, in page order of the source then target.
inline std::vector<std::string> graph_jsonl(const LinkGraph& g) {
  std::vector<std::string> lines;
  for (auto u : g.sorted_indices()) {
    std::vector<PageId> targets;
    for (auto v : g.out(u)) targets.push_back(g.nodes()[v]);
    std::sort(targets.begin(), targets.end());
    for (const auto& t : targets) {
      lines.push_back(Json{{"from", g.nodes()[u].path()}, {"to", t.path()}}.dump());
    }
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Sitemap

inline std::string xml_escape(std::string_view s) { return collections::html_escape(s); }

/// Validates an absolute http(s) URL and strips trailing slashes.
inline std::string normalize_base_url(std::string_view url) {
  std::string_view rest;
  if (url.starts_with("https://")) {
    rest = url.substr(8);
  } else if (url.starts_with("http://")) {
    rest = url.substr(7);
  } else {
    throw InvalidArgument("base URL must start with http:// or https://, got '" + std::string(url) + "'");
  }
  const auto host = rest.substr(0, rest.find('/'));
  if (host.empty()) throw InvalidArgument("base URL has no host: '" + std::string(url) + "'");
  for (char c : url) {
    if (static_cast<unsigned char>(c) <= 0x20 || c == '"' || c == '<' || c == '>') {
      throw InvalidArgument("base URL contains an invalid character: '" + std::string(url) + "'");
    }
  }
  std::string out(url);
  while (out.ends_with('/')) out.pop_back();
  return out;
}

inline std::string export_sitemap(const LinkGraph& g, std::string_view base_url) {
  const auto base = normalize_base_url(base_url);
  std::string xml = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                    "<urlset xmlns=\"http://www.sitemaps.org/schemas/sitemap/0.9\">\n";
  for (auto u : g.sorted_indices()) {
    xml += "  <url><loc>" + xml_escape(base + g.nodes()[u].path()) + "</loc></url>\n";
  }
  xml += "</urlset>\n";
  return xml;
}

}  // namespace geoforge::linkgraph
