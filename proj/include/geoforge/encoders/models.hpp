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
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "geoforge/core/checkpoint.hpp"
#include "geoforge/core/corpus.hpp"
#include "geoforge/core/rng.hpp"
#include "geoforge/core/training_log.hpp"
#include "geoforge/curation/curation.hpp"
#include "geoforge/encoders/contrastive.hpp"
#include "geoforge/encoders/encoder.hpp"
#include "geoforge/encoders/mlp.hpp"

namespace geoforge {

enum class LossKind { kPinClip, kSearchSage };

inline std::string_view to_string(LossKind k) { return k == LossKind::kPinClip ? "PinCLIP" : "SearchSAGE"; }

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "PinCLIP" || s == "pinclip") return LossKind::kPinClip;
  if (s == "SearchSAGE" || s == "searchsage") return LossKind::kSearchSage;
  throw InvalidArgument("unknown encoder kind '" + std::string(s) + "'");
}

struct EncoderConfig {
  std::vector<std::size_t> hidden{64};
  std::size_t output_dim = 32;
  double temperature = kDefaultTemperature;
  std::size_t batch_size = 128;
  std::size_t steps = 300;
  double learning_rate = 0.05;
};

// ---------------------------------------------------------------------------
// Tensor conversion

inline void append_mlp(Checkpoint& ck, const std::string& prefix, const Mlp& m) {
  ck.meta[prefix + ".layers"] = std::to_string(m.layers());
  for (std::size_t l = 0; l < m.layers(); ++l) {
    ck.tensors.emplace_back(prefix + ".W" + std::to_string(l), matrix_to_tensor(m.weights[l]));
    ck.tensors.emplace_back(prefix + ".b" + std::to_string(l), matrix_to_tensor(m.biases[l]));
  }
}

inline Mlp read_mlp(const Checkpoint& ck, const std::string& prefix) {
  Mlp m;
  const std::size_t layers = std::stoul(ck.meta_value(prefix + ".layers"));
  for (std::size_t l = 0; l < layers; ++l) {
    m.weights.push_back(tensor_to_matrix(ck.tensor(prefix + ".W" + std::to_string(l))));
    Matrix b = tensor_to_matrix(ck.tensor(prefix + ".b" + std::to_string(l)));
    m.biases.push_back(b.row(0));
    if (m.biases.back().cols() != m.weights.back().cols() ||
        (l > 0 && m.weights[l].rows() != m.weights[l - 1].cols())) {
      throw FormatError("checkpoint network '" + prefix + "' has inconsistent layer shapes");
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Models

/// Image tower and text tower sharing one output space; a pin embedding is
/// the normalized sum of both tower outputs.
class PinClipModel final : public Encoder {
 public:
  PinClipModel() = default;
  PinClipModel(const Dims& dims, const EncoderConfig& cfg, std::uint64_t seed)
      : image(dims.visual, cfg.hidden, cfg.output_dim, derive_seed(seed, 0x11)),
        text(dims.text, cfg.hidden, cfg.output_dim, derive_seed(seed, 0x12)) {}

  Mlp image;
  Mlp text;

  DenseVector encode_text(std::string_view t) const override {
    return encode(text, hashed_text_embedding(t, text.input_dim()));
  }
  DenseVector encode_pin(const PinRecord& pin) const override {
    Matrix u = image.encode(to_matrix(pin.visual_embedding)) + text.encode(to_matrix(pin.text_embedding));
    normalize_rows(u);
    return DenseVector(row_to_floats(u, 0), true);
  }
  std::size_t dim() const override { return text.output_dim(); }
  std::string name() const override { return "PinCLIP"; }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.kind = "encoder/PinCLIP";
    append_mlp(ck, "image", image);
    append_mlp(ck, "text", text);
    return ck;
  }
  static PinClipModel from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "encoder/PinCLIP") throw FormatError("expected a PinCLIP checkpoint, got '" + ck.kind + "'");
    PinClipModel m;
    m.image = read_mlp(ck, "image");
    m.text = read_mlp(ck, "text");
    return m;
  }

  friend bool operator==(const PinClipModel& a, const PinClipModel& b) {
    return a.image == b.image && a.text == b.text;
  }
};

/// Query tower over hashed text and entity tower over concatenated pin
/// visual and text features.
class SearchSageModel final : public Encoder {
 public:
  SearchSageModel() = default;
  SearchSageModel(const Dims& dims, const EncoderConfig& cfg, std::uint64_t seed)
      : query(dims.text, cfg.hidden, cfg.output_dim, derive_seed(seed, 0x21)),
        entity(dims.visual + dims.text, cfg.hidden, cfg.output_dim, derive_seed(seed, 0x22)) {}

  Mlp query;
  Mlp entity;

  static std::vector<float> entity_features(const PinRecord& pin) {
    std::vector<float> f = pin.visual_embedding;
    f.insert(f.end(), pin.text_embedding.begin(), pin.text_embedding.end());
    return f;
  }

  DenseVector encode_text(std::string_view t) const override {
    return encode(query, hashed_text_embedding(t, query.input_dim()));
  }
  DenseVector encode_pin(const PinRecord& pin) const override {
    return encode(entity, DenseVector(entity_features(pin)));
  }
  std::size_t dim() const override { return query.output_dim(); }
  std::string name() const override { return "SearchSAGE"; }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.kind = "encoder/SearchSAGE";
    append_mlp(ck, "query", query);
    append_mlp(ck, "entity", entity);
    return ck;
  }
  static SearchSageModel from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "encoder/SearchSAGE") throw FormatError("expected a SearchSAGE checkpoint, got '" + ck.kind + "'");
    SearchSageModel m;
    m.query = read_mlp(ck, "query");
    m.entity = read_mlp(ck, "entity");
    return m;
  }

  friend bool operator==(const SearchSageModel& a, const SearchSageModel& b) {
    return a.query == b.query && a.entity == b.entity;
  }
};

/// Loads whichever encoder kind the checkpoint holds.
inline std::unique_ptr<Encoder> load_encoder(const std::filesystem::path& path) {
  const auto ck = Checkpoint::load(path);
  if (ck.kind == "encoder/PinCLIP") return std::make_unique<PinClipModel>(PinClipModel::from_checkpoint(ck));
  if (ck.kind == "encoder/SearchSAGE") return std::make_unique<SearchSageModel>(SearchSageModel::from_checkpoint(ck));
  throw FormatError(path.string() + ": not an encoder checkpoint (kind '" + ck.kind + "')");
}

// ---------------------------------------------------------------------------
// Objective evaluation on explicit batches

/// Rows of pin features for one PinCLIP step.
struct PinClipBatch {
  Matrix image_text_visual, image_text_text;  // B rows each
  Matrix pair_visual, pair_text;              // 2B rows: anchors then positives
  double temperature = kDefaultTemperature;
};

struct PinClipStep {
  double loss = 0.0;
  double image_text_loss = 0.0;
  double pin_pin_loss = 0.0;
  Mlp::Grads image_grads;
  Mlp::Grads text_grads;
};

/// Summed PinCLIP objective and its gradients w.r.t. both towers.
inline PinClipStep pinclip_objective(const PinClipModel& m, const PinClipBatch& b) {
  PinClipStep s;
  s.image_grads = m.image.zero_grads();
  s.text_grads = m.text.zero_grads();

  const auto img = m.image.forward(b.image_text_visual);
  const auto txt = m.text.forward(b.image_text_text);

  const auto pv = m.image.forward(b.pair_visual);
  const auto pt = m.text.forward(b.pair_text);
  Matrix u = pv.output + pt.output;
  const Eigen::VectorXd un = normalize_rows(u);
  const Eigen::Index half = u.rows() / 2;

  ContrastiveBatch it{img.output, txt.output, b.temperature};
  ContrastiveBatch pp{u.topRows(half), u.bottomRows(half), b.temperature};
  const auto r = pinclip_loss(it, pp);
  s.loss = r.loss;
  s.image_text_loss = r.image_text.loss;
  s.pin_pin_loss = r.pin_pin.loss;

  m.image.backward(img, r.image_text.d_anchors, s.image_grads);
  m.text.backward(txt, r.image_text.d_positives, s.text_grads);

  Matrix dm(u.rows(), u.cols());
  dm.topRows(half) = r.pin_pin.d_anchors;
  dm.bottomRows(half) = r.pin_pin.d_positives;
  const Matrix du = normalize_rows_backward(u, un, dm);
  m.image.backward(pv, du, s.image_grads);
  m.text.backward(pt, du, s.text_grads);
  return s;
}

/// Query rows and entity rows per task type.
struct SearchSageBatch {
  std::map<TaskType, std::pair<Matrix, Matrix>> tasks;  // (query features, entity features)
  double temperature = kDefaultTemperature;
};

struct SearchSageStep {
  double loss = 0.0;
  std::map<TaskType, double> per_task;
  Mlp::Grads query_grads;
  Mlp::Grads entity_grads;
};

inline SearchSageStep searchsage_objective(const SearchSageModel& m, const SearchSageBatch& b) {
  SearchSageStep s;
  s.query_grads = m.query.zero_grads();
  s.entity_grads = m.entity.zero_grads();
  std::map<TaskType, std::pair<Mlp::Cache, Mlp::Cache>> caches;
  TaskBatchSet set;
  for (const auto& [type, rows] : b.tasks) {
    auto q = m.query.forward(rows.first);
    auto e = m.entity.forward(rows.second);
    set.emplace(type, ContrastiveBatch{q.output, e.output, b.temperature});
    caches.emplace(type, std::make_pair(std::move(q), std::move(e)));
  }
  const auto r = searchsage_loss(set);
  s.loss = r.loss;
  for (const auto& [type, part] : r.per_task) {
    s.per_task[type] = part.loss;
    const auto& [qc, ec] = caches.at(type);
    m.query.backward(qc, part.d_anchors, s.query_grads);
    m.entity.backward(ec, part.d_positives, s.entity_grads);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Training

/// Positive pairs drawn from a corpus for each objective.
struct TrainingPairs {
  // PinCLIP
  std::vector<std::size_t> pins;                              // image-text rows
  std::vector<std::pair<std::size_t, std::size_t>> co_saves;  // same-board pin pairs
  // SearchSAGE
  std::vector<std::pair<std::string, std::size_t>> query_pin;
  std::vector<std::pair<std::string, std::uint64_t>> query_board;
  std::map<std::uint64_t, std::vector<std::size_t>> boards;
};

inline TrainingPairs training_pairs(const Corpus& c) {
  TrainingPairs p;
  for (std::size_t i = 0; i < c.pins.size(); ++i) {
    p.pins.push_back(i);
    if (c.pins[i].board_id) p.boards[*c.pins[i].board_id].push_back(i);
  }
  for (const auto& [board, members] : p.boards) {
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) p.co_saves.emplace_back(members[a], members[b]);
    }
  }
  std::map<Signature, std::size_t> pos;
  for (std::size_t i = 0; i < c.pins.size(); ++i) pos[c.pins[i].signature] = i;
  std::set<std::pair<std::string, std::uint64_t>> seen_board;
  for (const auto& e : c.engagement) {
    if (!curation::retain(e)) continue;
    auto it = pos.find(e.pin_signature);
    if (it == pos.end()) continue;
    p.query_pin.emplace_back(e.query_text, it->second);
    if (const auto& board = c.pins[it->second].board_id) {
      if (seen_board.emplace(e.query_text, *board).second) p.query_board.emplace_back(e.query_text, *board);
    }
  }
  return p;
}

struct EncoderTrainingResult {
  std::unique_ptr<Encoder> model;
  std::vector<TrainingLogEntry> log;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

namespace detail {

inline void check_finite(double loss, std::size_t step, std::initializer_list<const Mlp*> nets) {
  if (std::isfinite(loss)) {
    bool ok = true;
    for (const Mlp* n : nets) ok = ok && n->all_finite();
    if (ok) return;
  }
  std::ostringstream os;
  os << "training diverged at step " << step << " (loss " << loss << "); parameter norms:";
  for (const Mlp* n : nets) {
    double s = 0.0;
    for (std::size_t l = 0; l < n->layers(); ++l) s += n->weights[l].squaredNorm() + n->biases[l].squaredNorm();
    os << ' ' << std::sqrt(s);
  }
  throw NumericError(os.str());
}

inline void set_row(Matrix& m, Eigen::Index r, std::span<const float> v) {
  for (std::size_t i = 0; i < v.size(); ++i) m(r, Eigen::Index(i)) = v[i];
}

template <typename T>
std::vector<T> draw(Rng& rng, const std::vector<T>& pool, std::size_t n) {
  std::vector<T> out;
  out.reserve(n);
  if (pool.size() >= n) {
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
      std::swap(idx[k], idx[k + rng.index(idx.size() - k)]);
      out.push_back(pool[idx[k]]);
    }
  } else {
    for (std::size_t k = 0; k < n; ++k) out.push_back(pool[rng.index(pool.size())]);
  }
  return out;
}

}  // namespace detail

inline PinClipBatch make_pinclip_batch(const Corpus& c, const TrainingPairs& pairs, Rng& rng, std::size_t batch,
                                       double temperature) {
  const auto pins = detail::draw(rng, pairs.pins, batch);
  const auto co = detail::draw(rng, pairs.co_saves, batch);
  const auto b = Eigen::Index(batch);
  PinClipBatch out;
  out.temperature = temperature;
  out.image_text_visual.resize(b, Eigen::Index(c.dims.visual));
  out.image_text_text.resize(b, Eigen::Index(c.dims.text));
  out.pair_visual.resize(2 * b, Eigen::Index(c.dims.visual));
  out.pair_text.resize(2 * b, Eigen::Index(c.dims.text));
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& p = c.pins[pins[std::size_t(i)]];
    detail::set_row(out.image_text_visual, i, p.visual_embedding);
    detail::set_row(out.image_text_text, i, p.text_embedding);
    const auto& a = c.pins[co[std::size_t(i)].first];
    const auto& z = c.pins[co[std::size_t(i)].second];
    detail::set_row(out.pair_visual, i, a.visual_embedding);
    detail::set_row(out.pair_text, i, a.text_embedding);
    detail::set_row(out.pair_visual, b + i, z.visual_embedding);
    detail::set_row(out.pair_text, b + i, z.text_embedding);
  }
  return out;
}

inline SearchSageBatch make_searchsage_batch(const Corpus& c, const TrainingPairs& pairs, Rng& rng,
                                             std::size_t batch, double temperature) {
  SearchSageBatch out;
  out.temperature = temperature;
  const auto ent_dim = Eigen::Index(c.dims.visual + c.dims.text);
  auto pin_row = [&](Matrix& m, Eigen::Index r, const PinRecord& p) {
    detail::set_row(m, r, SearchSageModel::entity_features(p));
  };
  if (!pairs.query_pin.empty()) {
    const auto qp = detail::draw(rng, pairs.query_pin, batch);
    Matrix q(Eigen::Index(qp.size()), Eigen::Index(c.dims.text)), e(Eigen::Index(qp.size()), ent_dim);
    for (std::size_t i = 0; i < qp.size(); ++i) {
      detail::set_row(q, Eigen::Index(i), hashed_text_embedding(qp[i].first, c.dims.text).values);
      pin_row(e, Eigen::Index(i), c.pins[qp[i].second]);
    }
    out.tasks.emplace(TaskType::kQueryPin, std::make_pair(std::move(q), std::move(e)));
  }
  if (!pairs.query_board.empty()) {
    const auto qb = detail::draw(rng, pairs.query_board, batch);
    Matrix q(Eigen::Index(qb.size()), Eigen::Index(c.dims.text)), e = Matrix::Zero(Eigen::Index(qb.size()), ent_dim);
    for (std::size_t i = 0; i < qb.size(); ++i) {
      detail::set_row(q, Eigen::Index(i), hashed_text_embedding(qb[i].first, c.dims.text).values);
      const auto& members = pairs.boards.at(qb[i].second);
      for (std::size_t m : members) {
        const auto f = SearchSageModel::entity_features(c.pins[m]);
        for (std::size_t k = 0; k < f.size(); ++k) e(Eigen::Index(i), Eigen::Index(k)) += f[k];
      }
      e.row(Eigen::Index(i)) /= double(members.size());
    }
    out.tasks.emplace(TaskType::kQueryBoard, std::make_pair(std::move(q), std::move(e)));
  }
  return out;
}

/// Plain SGD on the selected objective. Deterministic in `seed`.
inline EncoderTrainingResult train_encoder(const EncoderConfig& cfg, const Corpus& corpus, LossKind kind,
                                           std::uint64_t seed) {
  if (cfg.batch_size < 2) throw InvalidArgument("encoder batch size must be at least 2");
  const auto pairs = training_pairs(corpus);
  Rng rng(derive_seed(seed, 0x31));
  EncoderTrainingResult out;

  auto record = [&](std::size_t step, double loss, double gsq) {
    out.log.push_back({step, loss, std::sqrt(gsq)});
    if (step == 0) out.initial_loss = loss;
    out.final_loss = loss;
  };

  if (kind == LossKind::kPinClip) {
    if (pairs.pins.size() < 2 || pairs.co_saves.empty()) {
      throw InvalidArgument("PinCLIP training needs at least 2 pins and one board co-save pair");
    }
    PinClipModel m(corpus.dims, cfg, seed);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      const auto batch = make_pinclip_batch(corpus, pairs, rng, cfg.batch_size, cfg.temperature);
      auto s = pinclip_objective(m, batch);
      detail::check_finite(s.loss, step, {&m.image, &m.text});
      record(step, s.loss, Mlp::squared_norm(s.image_grads) + Mlp::squared_norm(s.text_grads));
      m.image.apply(s.image_grads, cfg.learning_rate);
      m.text.apply(s.text_grads, cfg.learning_rate);
      detail::check_finite(s.loss, step, {&m.image, &m.text});
    }
    out.model = std::make_unique<PinClipModel>(std::move(m));
  } else {
    if (pairs.query_pin.empty()) throw InvalidArgument("SearchSAGE training needs retained engagement pairs");
    SearchSageModel m(corpus.dims, cfg, seed);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      const auto batch = make_searchsage_batch(corpus, pairs, rng, cfg.batch_size, cfg.temperature);
      auto s = searchsage_objective(m, batch);
      detail::check_finite(s.loss, step, {&m.query, &m.entity});
      record(step, s.loss, Mlp::squared_norm(s.query_grads) + Mlp::squared_norm(s.entity_grads));
      m.query.apply(s.query_grads, cfg.learning_rate);
      m.entity.apply(s.entity_grads, cfg.learning_rate);
      detail::check_finite(s.loss, step, {&m.query, &m.entity});
    }
    out.model = std::make_unique<SearchSageModel>(std::move(m));
  }
  return out;
}

inline Checkpoint encoder_checkpoint(const Encoder& e) {
  if (auto* p = dynamic_cast<const PinClipModel*>(&e)) return p->to_checkpoint();
  if (auto* s = dynamic_cast<const SearchSageModel*>(&e)) return s->to_checkpoint();
  throw InvalidArgument("encoder '" + e.name() + "' has no checkpoint form");
}

}  // namespace geoforge
