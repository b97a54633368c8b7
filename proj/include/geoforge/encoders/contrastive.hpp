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
#include <map>
#include <string>
#include <string_view>

#include "geoforge/core/error.hpp"
#include "geoforge/encoders/mlp.hpp"

namespace geoforge {

inline constexpr double kDefaultTemperature = 0.07;

/// Row i of `anchors` is paired with row i of `positives`; every other row of
/// `positives` is an in-batch negative for it.
struct ContrastiveBatch {
  Matrix anchors;
  Matrix positives;
  double temperature = kDefaultTemperature;

  Eigen::Index size() const { return anchors.rows(); }

  void validate() const {
    if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
    if (anchors.rows() != positives.rows() || anchors.cols() != positives.cols()) {
      throw DimensionError("anchors and positives must have the same shape");
    }
    if (anchors.rows() < 2) throw InvalidArgument("contrastive batch needs at least 2 rows");
    for (const Matrix* m : {&anchors, &positives}) {
      for (Eigen::Index i = 0; i < m->rows(); ++i) {
        if (std::abs(m->row(i).norm() - 1.0) > 1e-6) {
          throw InvalidArgument("contrastive batch row " + std::to_string(i) + " is not unit-norm");
        }
      }
    }
  }
};

struct ContrastiveResult {
  double loss = 0.0;
  Matrix d_anchors;
  Matrix d_positives;
};

/// Mean over rows of −log softmax_i(x_i·y_i/τ) with the softmax over all y_k.
/// Evaluates any matrices of matching shape; the unit-norm contract is
/// enforced by softmax_contrastive_loss.
inline ContrastiveResult contrastive_loss_unchecked(const Matrix& anchors, const Matrix& positives,
                                                    double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  const Eigen::Index b = anchors.rows();
  const Matrix logits = (anchors * positives.transpose()) / temperature;
  Matrix probs(b, b);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const RowVector e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    probs.row(i) = e / z;
    loss += (mx + std::log(z)) - logits(i, i);
  }
  ContrastiveResult r;
  r.loss = loss / double(b);
  Matrix d_logits = probs;
  d_logits.diagonal().array() -= 1.0;
  d_logits /= (double(b) * temperature);
  r.d_anchors = d_logits * positives;
  r.d_positives = d_logits.transpose() * anchors;
  if (!std::isfinite(r.loss)) throw NumericError("contrastive loss is not finite");
  return r;
}

inline ContrastiveResult softmax_contrastive_loss(const ContrastiveBatch& batch) {
  batch.validate();
  return contrastive_loss_unchecked(batch.anchors, batch.positives, batch.temperature);
}

struct PinClipLossResult {
  double loss = 0.0;
  ContrastiveResult image_text;
  ContrastiveResult pin_pin;
};

/// Image-text loss plus pin-pin (board co-save) loss. Gradients are kept per
/// batch; callers sum them where encoders are shared.
inline PinClipLossResult pinclip_loss(const ContrastiveBatch& image_text, const ContrastiveBatch& pin_pin) {
  PinClipLossResult r;
  r.image_text = softmax_contrastive_loss(image_text);
  r.pin_pin = softmax_contrastive_loss(pin_pin);
  r.loss = r.image_text.loss + r.pin_pin.loss;
  return r;
}

enum class TaskType { kQueryPin, kQueryBoard, kQueryProduct };

inline std::string_view to_string(TaskType t) {
  switch (t) {
    case TaskType::kQueryPin: return "QueryPin";
    case TaskType::kQueryBoard: return "QueryBoard";
    case TaskType::kQueryProduct: return "QueryProduct";
  }
  return "?";
}

using TaskBatchSet = std::map<TaskType, ContrastiveBatch>;

struct SearchSageLossResult {
  double loss = 0.0;
  std::map<TaskType, ContrastiveResult> per_task;
};

/// Sum over task types of the per-task mean softmax loss.
inline SearchSageLossResult searchsage_loss(const TaskBatchSet& tasks) {
  if (tasks.empty()) throw InvalidArgument("searchsage_loss: no tasks");
  SearchSageLossResult r;
  for (const auto& [type, batch] : tasks) {
    auto part = softmax_contrastive_loss(batch);
    r.loss += part.loss;
    r.per_task.emplace(type, std::move(part));
  }
  return r;
}

}  // namespace geoforge
