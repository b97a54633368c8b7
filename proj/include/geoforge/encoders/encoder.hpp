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

#include <string>
#include <string_view>

#include "geoforge/core/records.hpp"
#include "geoforge/core/text.hpp"
#include "geoforge/core/vector_math.hpp"
#include "geoforge/encoders/mlp.hpp"

namespace geoforge {

/// Maps topic text and pins into one embedding space. Implementations are
/// immutable after construction and safe to share across threads.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual DenseVector encode_text(std::string_view text) const = 0;
  virtual DenseVector encode_pin(const PinRecord& pin) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;
};

/// Raw hashed bag-of-tokens space; pins are represented by their stored
/// text embedding.
class HashedTextEncoder final : public Encoder {
 public:
  explicit HashedTextEncoder(std::size_t dim) : dim_(dim) {}
  DenseVector encode_text(std::string_view text) const override { return hashed_text_embedding(text, dim_); }
  DenseVector encode_pin(const PinRecord& pin) const override {
    if (pin.text_embedding.size() != dim_) {
      throw DimensionError("pin text_embedding has dimension " + std::to_string(pin.text_embedding.size()) +
                           ", expected " + std::to_string(dim_));
    }
    return l2_normalize(DenseVector(pin.text_embedding));
  }
  std::size_t dim() const override { return dim_; }
  std::string name() const override { return "hashed-text"; }

 private:
  std::size_t dim_;
};

/// Single-vector forward pass; output is unit-norm.
inline DenseVector encode(const Mlp& model, const DenseVector& input) {
  if (input.dim() != model.input_dim()) {
    throw DimensionError("encode: input has dimension " + std::to_string(input.dim()) + ", expected " +
                         std::to_string(model.input_dim()));
  }
  const Matrix out = model.encode(to_matrix(input.values));
  return DenseVector(row_to_floats(out, 0), true);
}

}  // namespace geoforge
