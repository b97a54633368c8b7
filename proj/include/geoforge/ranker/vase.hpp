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
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "geoforge/core/checkpoint.hpp"
#include "geoforge/core/error.hpp"
#include "geoforge/core/records.hpp"
#include "geoforge/core/rng.hpp"
#include "geoforge/core/text.hpp"
#include "geoforge/core/training_log.hpp"
#include "geoforge/encoders/mlp.hpp"

namespace geoforge::ranker {

enum class Mode { kTrain, kEval };

inline constexpr double kLayerNormEpsilon = 1e-5;
inline constexpr std::size_t kLengthCap = 16;
inline constexpr char kRankerKind[] = "ranker/VASE";

struct TowerConfig {
  std::size_t pin_input_dim = 1028 + 768 + 1;
  std::size_t query_input_dim = 768 + 1;
  std::vector<std::size_t> hidden{512, 384, 256};
  std::size_t output = 128;
  double dropout = 0.1;
  double margin = 0.95;
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  std::size_t epochs = 5;

  static TowerConfig for_dims(const Dims& d) {
    TowerConfig c;
    c.pin_input_dim = d.visual + d.text + 1;
    c.query_input_dim = d.text + 1;
    c.output = d.ranker_output;
    return c;
  }

  /// Hidden and output widths scaled by `multiplier` (at least 1 unit each).
  TowerConfig scaled(double multiplier) const {
    if (!(multiplier > 0.0)) throw ConfigError("width multiplier must be positive");
    TowerConfig c = *this;
    auto scale = [&](std::size_t w) { return std::max<std::size_t>(1, std::size_t(std::llround(double(w) * multiplier))); };
    for (auto& h : c.hidden) h = scale(h);
    c.output = scale(output);
    return c;
  }

  void validate() const {
    if (hidden.empty()) throw ConfigError("ranker: hidden layers must be non-empty");
    for (auto h : hidden) {
      if (h == 0) throw ConfigError("ranker: hidden widths must be positive");
    }
    if (pin_input_dim == 0 || query_input_dim == 0 || output == 0) throw ConfigError("ranker: dims must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("ranker: dropout must lie in [0, 1)");
    if (!(margin > 0.0)) throw ConfigError("ranker: margin must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("ranker: learning rate must be positive");
    if (batch_size == 0) throw ConfigError("ranker: batch size must be positive");
  }
};

// ---------------------------------------------------------------------------
// Features

struct PinFeatures {
  std::vector<float> visual_embedding;
  std::vector<float> text_embedding;
  float perception_score = 0.0f;

  static PinFeatures from(const PinRecord& p) { return {p.visual_embedding, p.text_embedding, p.perception_score}; }

  std::vector<float> concat() const {
    std::vector<float> v(visual_embedding);
    v.insert(v.end(), text_embedding.begin(), text_embedding.end());
    v.push_back(perception_score);
    return v;
  }
  std::size_t dim() const { return visual_embedding.size() + text_embedding.size() + 1; }
};

inline float length_norm_score(std::string_view text) {
  return float(std::min(tokenize(text).size(), kLengthCap)) / float(kLengthCap);
}

struct QueryFeatures {
  std::vector<float> text_embedding;
  float length_norm = 0.0f;

  static QueryFeatures from(std::string_view text, std::vector<float> embedding) {
    return {std::move(embedding), length_norm_score(text)};
  }

  std::vector<float> concat() const {
    std::vector<float> v(text_embedding);
    v.push_back(length_norm);
    return v;
  }
  std::size_t dim() const { return text_embedding.size() + 1; }

  friend bool operator==(const QueryFeatures&, const QueryFeatures&) = default;
};

struct RankerTriplet {
  PinFeatures pin;
  QueryFeatures positive;
  QueryFeatures negative;
};

// ---------------------------------------------------------------------------
// Tower

/// Hidden layers are linear → ReLU → LayerNorm → Dropout; the last layer is
/// linear followed by L2 normalization.
class Tower {
 public:
  struct Cache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre;
    std::vector<Matrix> xhat;
    std::vector<Eigen::VectorXd> inv_std;
    std::vector<Matrix> masks;  // empty when dropout is off
    Matrix output;
    Eigen::VectorXd norms;
  };

  struct Grads {
    std::vector<Matrix> weights;
    std::vector<RowVector> biases;
    std::vector<RowVector> gains;
    std::vector<RowVector> shifts;
  };

  Tower() = default;
  Tower(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim, std::uint64_t seed) {
    Rng rng(seed);
    std::size_t in = input_dim;
    auto add = [&](std::size_t out) {
      Matrix w(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
      const double scale = std::sqrt(2.0 / double(in));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * rng.normal();
      RowVector b(static_cast<Eigen::Index>(out));
      for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.01 * rng.normal();
      weights.push_back(std::move(w));
      biases.push_back(std::move(b));
      in = out;
    };
    for (auto h : hidden) {
      add(h);
      gains.push_back(RowVector::Ones(Eigen::Index(h)));
      shifts.push_back(RowVector::Zero(Eigen::Index(h)));
    }
    add(output_dim);
  }

  std::vector<Matrix> weights;
  std::vector<RowVector> biases;
  std::vector<RowVector> gains;   // LayerNorm scale per hidden layer
  std::vector<RowVector> shifts;  // LayerNorm offset per hidden layer

  std::size_t input_dim() const { return weights.empty() ? 0 : std::size_t(weights.front().rows()); }
  std::size_t output_dim() const { return weights.empty() ? 0 : std::size_t(weights.back().cols()); }

  /// `rng` draws dropout masks; it is untouched in Eval mode or at rate 0.
  Cache forward(const Matrix& x, Mode mode, double dropout, Rng& rng) const {
    if (std::size_t(x.cols()) != input_dim()) {
      throw DimensionError("tower: input has dimension " + std::to_string(x.cols()) + ", expected " +
                           std::to_string(input_dim()));
    }
    Cache c;
    Matrix h = x;
    const bool drop = mode == Mode::kTrain && dropout > 0.0;
    for (std::size_t l = 0; l < gains.size(); ++l) {
      c.inputs.push_back(h);
      Matrix z = h * weights[l];
      z.rowwise() += biases[l];
      Matrix a = z.cwiseMax(0.0);
      c.pre.push_back(std::move(z));
      const double n = double(a.cols());
      Eigen::VectorXd mean = a.rowwise().sum() / n;
      a.colwise() -= mean;
      Eigen::VectorXd inv = ((a.array().square().rowwise().sum() / n) + kLayerNormEpsilon).rsqrt().matrix();
      Matrix xh = inv.asDiagonal() * a;
      h = xh.array().rowwise() * gains[l].array();
      h.rowwise() += shifts[l];
      c.xhat.push_back(std::move(xh));
      c.inv_std.push_back(std::move(inv));
      if (drop) {
        Matrix mask(h.rows(), h.cols());
        const double keep = 1.0 - dropout;
        for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        h = h.cwiseProduct(mask);
        c.masks.push_back(std::move(mask));
      }
    }
    c.inputs.push_back(h);
    Matrix out = h * weights.back();
    out.rowwise() += biases.back();
    if (!out.allFinite()) throw NumericError("tower: non-finite activations");
    c.norms = normalize_rows(out);
    c.output = std::move(out);
    return c;
  }

  Matrix encode(const Matrix& x) const {
    Rng unused(0);
    return forward(x, Mode::kEval, 0.0, unused).output;
  }

  Grads zero_grads() const {
    Grads g;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      g.weights.push_back(Matrix::Zero(weights[l].rows(), weights[l].cols()));
      g.biases.push_back(RowVector::Zero(biases[l].cols()));
    }
    for (std::size_t l = 0; l < gains.size(); ++l) {
      g.gains.push_back(RowVector::Zero(gains[l].cols()));
      g.shifts.push_back(RowVector::Zero(shifts[l].cols()));
    }
    return g;
  }

  /// Accumulates parameter gradients into `g`; returns d(loss)/d(input).
  Matrix backward(const Cache& c, const Matrix& d_output, Grads& g) const {
    Matrix dz = normalize_rows_backward(c.output, c.norms, d_output);
    const std::size_t last = weights.size() - 1;
    g.weights[last].noalias() += c.inputs[last].transpose() * dz;
    g.biases[last] += dz.colwise().sum();
    Matrix dh = dz * weights[last].transpose();
    for (std::size_t l = gains.size(); l-- > 0;) {
      if (!c.masks.empty()) dh = dh.cwiseProduct(c.masks[l]);
      g.gains[l] += dh.cwiseProduct(c.xhat[l]).colwise().sum();
      g.shifts[l] += dh.colwise().sum();
      Matrix dxh = dh.array().rowwise() * gains[l].array();
      const double n = double(dxh.cols());
      Eigen::VectorXd sum_d = dxh.rowwise().sum();
      Eigen::VectorXd sum_dx = dxh.cwiseProduct(c.xhat[l]).rowwise().sum();
      Matrix da = dxh * n;
      da.colwise() -= sum_d;
      da -= sum_dx.asDiagonal() * c.xhat[l];
      da = (c.inv_std[l] / n).asDiagonal() * da;
      dz = da.cwiseProduct((c.pre[l].array() > 0.0).cast<double>().matrix());
      g.weights[l].noalias() += c.inputs[l].transpose() * dz;
      g.biases[l] += dz.colwise().sum();
      dh = dz * weights[l].transpose();
    }
    return dh;
  }

  void apply(const Grads& g, double step) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] -= step * g.weights[l];
      biases[l] -= step * g.biases[l];
    }
    for (std::size_t l = 0; l < gains.size(); ++l) {
      gains[l] -= step * g.gains[l];
      shifts[l] -= step * g.shifts[l];
    }
  }

  /// Visits every parameter in a fixed order; matches flatten().
  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    auto visit = [&](auto& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) fn(m.data()[i]);
    };
    for (std::size_t l = 0; l < weights.size(); ++l) {
      visit(weights[l]);
      visit(biases[l]);
      if (l < gains.size()) {
        visit(gains[l]);
        visit(shifts[l]);
      }
    }
  }

  static std::vector<double> flatten(const Grads& g) {
    std::vector<double> out;
    auto put = [&](const auto& m) { out.insert(out.end(), m.data(), m.data() + m.size()); };
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      put(g.weights[l]);
      put(g.biases[l]);
      if (l < g.gains.size()) {
        put(g.gains[l]);
        put(g.shifts[l]);
      }
    }
    return out;
  }

  static double squared_norm(const Grads& g) {
    double s = 0.0;
    for (const auto& m : g.weights) s += m.squaredNorm();
    for (const auto& m : g.biases) s += m.squaredNorm();
    for (const auto& m : g.gains) s += m.squaredNorm();
    for (const auto& m : g.shifts) s += m.squaredNorm();
    return s;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    for (std::size_t l = 0; l < gains.size(); ++l) {
      if (!gains[l].allFinite() || !shifts[l].allFinite()) return false;
    }
    return true;
  }

  double parameter_norm() const {
    double s = 0.0;
    for (const auto& m : weights) s += m.squaredNorm();
    for (const auto& m : biases) s += m.squaredNorm();
    for (const auto& m : gains) s += m.squaredNorm();
    for (const auto& m : shifts) s += m.squaredNorm();
    return std::sqrt(s);
  }

  friend bool operator==(const Tower& a, const Tower& b) {
    auto same = [](const auto& x, const auto& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].rows() != y[i].rows() || x[i].cols() != y[i].cols() || x[i] != y[i]) return false;
      }
      return true;
    };
    return same(a.weights, b.weights) && same(a.biases, b.biases) && same(a.gains, b.gains) &&
           same(a.shifts, b.shifts);
  }
};

// ---------------------------------------------------------------------------
// Model

struct RankerModel {
  TowerConfig config;
  Tower pin_tower;
  Tower query_tower;

  RankerModel() = default;
  RankerModel(const TowerConfig& cfg, std::uint64_t seed)
      : config(cfg),
        pin_tower(cfg.pin_input_dim, cfg.hidden, cfg.output, derive_seed(seed, 0x41)),
        query_tower(cfg.query_input_dim, cfg.hidden, cfg.output, derive_seed(seed, 0x42)) {
    cfg.validate();
  }

  friend bool operator==(const RankerModel& a, const RankerModel& b) {
    return a.pin_tower == b.pin_tower && a.query_tower == b.query_tower;
  }
};

/// max(0, pin·neg − pin·pos + m).
inline double margin_loss(std::span<const float> pin, std::span<const float> pos, std::span<const float> neg,
                          double margin) {
  return std::max(0.0, dot(pin, neg) - dot(pin, pos) + margin);
}

inline double margin_loss(const DenseVector& pin, const DenseVector& pos, const DenseVector& neg, double margin) {
  return margin_loss(pin.span(), pos.span(), neg.span(), margin);
}

namespace detail {

inline void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string("ranker: ") + what + " has dimension " + std::to_string(got) + ", expected " +
                         std::to_string(want));
  }
}

inline void put_row(Matrix& m, Eigen::Index r, const std::vector<float>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) m(r, Eigen::Index(i)) = v[i];
}

}  // namespace detail

/// Feature matrices for a batch of triplets.
struct TripletBatch {
  Matrix pins;
  Matrix positives;
  Matrix negatives;

  static TripletBatch from(std::span<const RankerTriplet* const> ts, const TowerConfig& cfg) {
    TripletBatch b;
    const auto n = Eigen::Index(ts.size());
    b.pins.resize(n, Eigen::Index(cfg.pin_input_dim));
    b.positives.resize(n, Eigen::Index(cfg.query_input_dim));
    b.negatives.resize(n, Eigen::Index(cfg.query_input_dim));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& t = *ts[std::size_t(i)];
      detail::check_dim(t.pin.dim(), cfg.pin_input_dim, "pin features");
      detail::check_dim(t.positive.dim(), cfg.query_input_dim, "positive query features");
      detail::check_dim(t.negative.dim(), cfg.query_input_dim, "negative query features");
      detail::put_row(b.pins, i, t.pin.concat());
      detail::put_row(b.positives, i, t.positive.concat());
      detail::put_row(b.negatives, i, t.negative.concat());
    }
    return b;
  }
};

struct RankerStep {
  double loss = 0.0;
  Tower::Grads pin;
  Tower::Grads query;
  Tower::Cache pin_cache;
  Tower::Cache query_cache;  // positives stacked over negatives
  std::vector<bool> active;  // hinge active per triplet
};

/// Mean margin loss over the batch and its exact gradient. Dropout masks are
/// drawn from `dropout_seed`, so equal seeds give equal masks.
inline RankerStep ranker_objective(const RankerModel& m, const TripletBatch& b, Mode mode,
                                   std::uint64_t dropout_seed) {
  const Eigen::Index n = b.pins.rows();
  if (n == 0) throw InvalidArgument("ranker: empty batch");
  Rng rng(dropout_seed);
  RankerStep s;
  s.pin_cache = m.pin_tower.forward(b.pins, mode, m.config.dropout, rng);
  Matrix queries(2 * n, b.positives.cols());
  queries.topRows(n) = b.positives;
  queries.bottomRows(n) = b.negatives;
  s.query_cache = m.query_tower.forward(queries, mode, m.config.dropout, rng);
  const Matrix& p = s.pin_cache.output;
  const auto qp = s.query_cache.output.topRows(n);
  const auto qn = s.query_cache.output.bottomRows(n);

  Matrix dp = Matrix::Zero(n, p.cols());
  Matrix dq = Matrix::Zero(2 * n, p.cols());
  const double w = 1.0 / double(n);
  s.active.resize(std::size_t(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = p.row(i).dot(qn.row(i)) - p.row(i).dot(qp.row(i)) + m.config.margin;
    s.active[std::size_t(i)] = h > 0.0;
    if (h <= 0.0) continue;
    s.loss += w * h;
    dp.row(i) = w * (qn.row(i) - qp.row(i));
    dq.row(i) = -w * p.row(i);
    dq.row(n + i) = w * p.row(i);
  }
  s.pin = m.pin_tower.zero_grads();
  s.query = m.query_tower.zero_grads();
  m.pin_tower.backward(s.pin_cache, dp, s.pin);
  m.query_tower.backward(s.query_cache, dq, s.query);
  return s;
}

struct RankerTrainingResult {
  RankerModel model;
  std::vector<TrainingLogEntry> log;
};

inline RankerTrainingResult train_ranker(const std::vector<RankerTriplet>& triplets, const TowerConfig& cfg,
                                         std::uint64_t seed) {
  cfg.validate();
  if (triplets.empty()) throw InvalidArgument("train_ranker: no triplets");
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    if (triplets[i].positive == triplets[i].negative) {
      throw InvalidArgument("train_ranker: triplet " + std::to_string(i) + " has identical positive and negative");
    }
  }
  RankerTrainingResult r{RankerModel(cfg, seed), {}};
  Rng order_rng(derive_seed(seed, 0x43));
  Rng dropout_rng(derive_seed(seed, 0x44));
  std::vector<const RankerTriplet*> order;
  for (const auto& t : triplets) order.push_back(&t);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(std::span(order));
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - at);
      const auto batch = TripletBatch::from(std::span(order).subspan(at, len), cfg);
      auto s = ranker_objective(r.model, batch, Mode::kTrain, dropout_rng.next());
      const double gn = std::sqrt(Tower::squared_norm(s.pin) + Tower::squared_norm(s.query));
      r.model.pin_tower.apply(s.pin, cfg.learning_rate);
      r.model.query_tower.apply(s.query, cfg.learning_rate);
      if (!std::isfinite(s.loss) || !r.model.pin_tower.all_finite() || !r.model.query_tower.all_finite()) {
        std::ostringstream os;
        os << "ranker training diverged at step " << step << " (loss " << s.loss << ", grad norm " << gn
           << "); parameter norms " << r.model.pin_tower.parameter_norm() << ' '
           << r.model.query_tower.parameter_norm();
        throw NumericError(os.str());
      }
      r.log.push_back({step++, s.loss, gn});
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Scoring

inline Matrix embed_pins(const RankerModel& m, const std::vector<PinFeatures>& pins) {
  Matrix x(Eigen::Index(pins.size()), Eigen::Index(m.config.pin_input_dim));
  for (std::size_t i = 0; i < pins.size(); ++i) {
    detail::check_dim(pins[i].dim(), m.config.pin_input_dim, "pin features");
    detail::put_row(x, Eigen::Index(i), pins[i].concat());
  }
  return m.pin_tower.encode(x);
}

inline Matrix embed_queries(const RankerModel& m, const std::vector<QueryFeatures>& queries) {
  Matrix x(Eigen::Index(queries.size()), Eigen::Index(m.config.query_input_dim));
  for (std::size_t i = 0; i < queries.size(); ++i) {
    detail::check_dim(queries[i].dim(), m.config.query_input_dim, "query features");
    detail::put_row(x, Eigen::Index(i), queries[i].concat());
  }
  return m.query_tower.encode(x);
}

inline double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

/// Cosine of the two tower outputs in Eval mode.
inline double score(const RankerModel& m, const PinFeatures& pin, const QueryFeatures& query) {
  const Matrix p = embed_pins(m, {pin});
  const Matrix q = embed_queries(m, {query});
  return clamp_unit(p.row(0).dot(q.row(0)));
}

/// Fraction of strictly positive margins; ties count as failures.
inline double correct_rank(std::span<const double> positive_scores, std::span<const double> negative_scores) {
  if (positive_scores.empty()) throw InvalidArgument("correct_rank: empty evaluation set");
  if (positive_scores.size() != negative_scores.size()) throw InvalidArgument("correct_rank: size mismatch");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < positive_scores.size(); ++i) ok += positive_scores[i] > negative_scores[i];
  return double(ok) / double(positive_scores.size());
}

inline double correct_rank(const RankerModel& m, const std::vector<RankerTriplet>& triplets) {
  if (triplets.empty()) throw InvalidArgument("correct_rank: empty evaluation set");
  std::vector<const RankerTriplet*> ptrs;
  for (const auto& t : triplets) ptrs.push_back(&t);
  const auto b = TripletBatch::from(ptrs, m.config);
  const Matrix p = m.pin_tower.encode(b.pins);
  const Matrix qp = m.query_tower.encode(b.positives);
  const Matrix qn = m.query_tower.encode(b.negatives);
  std::vector<double> pos(triplets.size()), neg(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    pos[i] = clamp_unit(p.row(Eigen::Index(i)).dot(qp.row(Eigen::Index(i))));
    neg[i] = clamp_unit(p.row(Eigen::Index(i)).dot(qn.row(Eigen::Index(i))));
  }
  return correct_rank(pos, neg);
}

struct AnnotationCandidate {
  std::string text;
  QueryFeatures features;
};

struct RankedAnnotation {
  std::string text;
  double score = 0.0;

  friend bool operator==(const RankedAnnotation&, const RankedAnnotation&) = default;
};

/// Sorts by descending score, then ascending text, and keeps the first top_k.
inline std::vector<RankedAnnotation> order_annotations(std::vector<RankedAnnotation> scored, std::size_t top_k) {
  std::sort(scored.begin(), scored.end(), [](const RankedAnnotation& a, const RankedAnnotation& b) {
    return a.score != b.score ? a.score > b.score : a.text < b.text;
  });
  if (scored.size() > top_k) scored.resize(top_k);
  return scored;
}

inline std::vector<RankedAnnotation> rank_annotations(const RankerModel& m, const PinFeatures& pin,
                                                      const std::vector<AnnotationCandidate>& candidates,
                                                      std::size_t top_k) {
  if (candidates.empty()) return {};
  std::vector<QueryFeatures> qs;
  for (const auto& c : candidates) qs.push_back(c.features);
  const Matrix p = embed_pins(m, {pin});
  const Matrix q = embed_queries(m, qs);
  std::vector<RankedAnnotation> scored;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scored.push_back({candidates[i].text, clamp_unit(p.row(0).dot(q.row(Eigen::Index(i))))});
  }
  return order_annotations(std::move(scored), top_k);
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline void append_tower(Checkpoint& ck, const std::string& prefix, const Tower& t) {
  for (std::size_t l = 0; l < t.weights.size(); ++l) {
    const auto i = std::to_string(l);
    ck.tensors.emplace_back(prefix + ".W" + i, matrix_to_tensor(t.weights[l]));
    ck.tensors.emplace_back(prefix + ".b" + i, matrix_to_tensor(t.biases[l]));
    if (l < t.gains.size()) {
      ck.tensors.emplace_back(prefix + ".gain" + i, matrix_to_tensor(t.gains[l]));
      ck.tensors.emplace_back(prefix + ".shift" + i, matrix_to_tensor(t.shifts[l]));
    }
  }
}

inline Tower read_tower(const Checkpoint& ck, const std::string& prefix, std::size_t input, const TowerConfig& cfg) {
  Tower t;
  std::size_t in = input;
  for (std::size_t l = 0; l <= cfg.hidden.size(); ++l) {
    const auto i = std::to_string(l);
    const std::size_t out = l < cfg.hidden.size() ? cfg.hidden[l] : cfg.output;
    Matrix w = tensor_to_matrix(ck.tensor(prefix + ".W" + i));
    Matrix b = tensor_to_matrix(ck.tensor(prefix + ".b" + i));
    if (std::size_t(w.rows()) != in || std::size_t(w.cols()) != out || b.rows() != 1 || std::size_t(b.cols()) != out) {
      throw FormatError("ranker checkpoint: tower '" + prefix + "' layer " + i + " has the wrong shape");
    }
    t.weights.push_back(std::move(w));
    t.biases.push_back(b.row(0));
    if (l < cfg.hidden.size()) {
      Matrix g = tensor_to_matrix(ck.tensor(prefix + ".gain" + i));
      Matrix s = tensor_to_matrix(ck.tensor(prefix + ".shift" + i));
      if (std::size_t(g.cols()) != out || std::size_t(s.cols()) != out) {
        throw FormatError("ranker checkpoint: tower '" + prefix + "' norm " + i + " has the wrong shape");
      }
      t.gains.push_back(g.row(0));
      t.shifts.push_back(s.row(0));
    }
    in = out;
  }
  return t;
}

inline std::string join_widths(const std::vector<std::size_t>& ws) {
  std::string s;
  for (std::size_t i = 0; i < ws.size(); ++i) s += (i ? "," : "") + std::to_string(ws[i]);
  return s;
}

inline std::vector<std::size_t> split_widths(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream is(s);
  for (std::string part; std::getline(is, part, ',');) out.push_back(std::stoul(part));
  return out;
}

}  // namespace detail

inline Checkpoint ranker_checkpoint(const RankerModel& m) {
  Checkpoint ck;
  ck.kind = kRankerKind;
  const auto& c = m.config;
  auto num = [](double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
  };
  ck.meta = {{"pin_input_dim", std::to_string(c.pin_input_dim)},
             {"query_input_dim", std::to_string(c.query_input_dim)},
             {"hidden", detail::join_widths(c.hidden)},
             {"output", std::to_string(c.output)},
             {"dropout", num(c.dropout)},
             {"margin", num(c.margin)},
             {"learning_rate", num(c.learning_rate)},
             {"batch_size", std::to_string(c.batch_size)},
             {"epochs", std::to_string(c.epochs)}};
  detail::append_tower(ck, "pin", m.pin_tower);
  detail::append_tower(ck, "query", m.query_tower);
  return ck;
}

inline RankerModel ranker_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != kRankerKind) throw FormatError("checkpoint kind '" + ck.kind + "' is not a ranker");
  RankerModel m;
  auto& c = m.config;
  try {
    c.pin_input_dim = std::stoul(ck.meta_value("pin_input_dim"));
    c.query_input_dim = std::stoul(ck.meta_value("query_input_dim"));
    c.hidden = detail::split_widths(ck.meta_value("hidden"));
    c.output = std::stoul(ck.meta_value("output"));
    c.dropout = std::stod(ck.meta_value("dropout"));
    c.margin = std::stod(ck.meta_value("margin"));
    c.learning_rate = std::stod(ck.meta_value("learning_rate"));
    c.batch_size = std::stoul(ck.meta_value("batch_size"));
    c.epochs = std::stoul(ck.meta_value("epochs"));
  } catch (const std::logic_error&) {
    throw FormatError("ranker checkpoint: malformed metadata");
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("ranker checkpoint: ") + e.what());
  }
  m.pin_tower = detail::read_tower(ck, "pin", c.pin_input_dim, c);
  m.query_tower = detail::read_tower(ck, "query", c.query_input_dim, c);
  return m;
}

inline void save_ranker(const RankerModel& m, const std::filesystem::path& path) { ranker_checkpoint(m).save(path); }
inline RankerModel load_ranker(const std::filesystem::path& path) { return ranker_from_checkpoint(Checkpoint::load(path)); }

// ---------------------------------------------------------------------------
// Synthetic triplets

/// Two clusters sharing a common base direction and differing along one axis
/// in each feature space. Linearly separable, but an untrained tower sees the
/// shared base and ranks near chance.
struct SeparableTripletConfig {
  std::size_t visual_dim = 1028;
  std::size_t text_dim = 768;
  double separation = 0.2;
  double noise = 1.0;
};

inline std::vector<RankerTriplet> separable_triplets(const SeparableTripletConfig& cfg, std::size_t count,
                                                     std::uint64_t seed) {
  // Cluster geometry depends only on the dims, so train and eval draws with
  // different seeds share it.
  Rng geo(0x5EED0000ULL + cfg.visual_dim * 7919 + cfg.text_dim);
  auto random_unit = [](Rng& r, std::size_t d) {
    std::vector<float> v(d);
    for (auto& x : v) x = float(r.normal());
    return l2_normalized(v);
  };
  const auto base_v = random_unit(geo, cfg.visual_dim), dir_v = random_unit(geo, cfg.visual_dim);
  const auto base_t = random_unit(geo, cfg.text_dim), dir_t = random_unit(geo, cfg.text_dim);
  const auto base_q = random_unit(geo, cfg.text_dim), dir_q = random_unit(geo, cfg.text_dim);

  Rng rng(seed);
  auto sample = [&](const std::vector<float>& base, const std::vector<float>& dir, double sign) {
    const double sigma = cfg.noise / std::sqrt(double(base.size()));
    std::vector<float> v(base.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = float(base[i] + sign * cfg.separation * dir[i] + sigma * rng.normal());
    }
    return l2_normalized(v);
  };
  auto query = [&](double sign) {
    QueryFeatures q{sample(base_q, dir_q, sign), float(1 + rng.index(kLengthCap)) / float(kLengthCap)};
    return q;
  };
  std::vector<RankerTriplet> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    RankerTriplet t;
    t.pin = {sample(base_v, dir_v, sign), sample(base_t, dir_t, sign), float(rng.uniform(0.3, 1.0))};
    t.positive = query(sign);
    t.negative = query(-sign);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace geoforge::ranker
