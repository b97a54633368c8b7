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
#include <initializer_list>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geoforge/core/error.hpp"

namespace geoforge {

/// Fixed-length real vector. `normalized` promises ‖values‖₂ = 1 within 1e-6.
struct DenseVector {
  std::vector<float> values;
  bool normalized = false;

  DenseVector() = default;
  explicit DenseVector(std::vector<float> v, bool unit = false)
      : values(std::move(v)), normalized(unit) {}
  DenseVector(std::initializer_list<float> v) : values(v) {}

  std::size_t dim() const noexcept { return values.size(); }
  std::span<const float> span() const noexcept { return values; }
  float operator[](std::size_t i) const { return values[i]; }

  friend bool operator==(const DenseVector&, const DenseVector&) = default;
};

inline constexpr double kUnitTolerance = 1e-6;

/// Dot product with 64-bit accumulation.
inline double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: dimension mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

inline double l2_norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += double(x) * double(x);
  return std::sqrt(acc);
}

inline bool is_unit(std::span<const float> v, double tol = kUnitTolerance) {
  return std::abs(l2_norm(v) - 1.0) <= tol;
}

inline DenseVector l2_normalize(const DenseVector& v) {
  const double n = l2_norm(v.values);
  if (!(n > 0.0) || !std::isfinite(n)) throw ZeroNormError();
  std::vector<float> out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) out[i] = float(double(v.values[i]) / n);
  return DenseVector(std::move(out), true);
}

inline std::vector<float> l2_normalized(std::span<const float> v) {
  return l2_normalize(DenseVector(std::vector<float>(v.begin(), v.end()))).values;
}

/// Cosine similarity clamped to [-1, 1]. Reduces to the dot product when both
/// inputs carry the normalized flag.
inline double cosine(const DenseVector& a, const DenseVector& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("cosine: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
  }
  double c;
  if (a.normalized && b.normalized) {
    c = dot(a.values, b.values);
  } else {
    const double na = l2_norm(a.values), nb = l2_norm(b.values);
    if (na == 0.0 || nb == 0.0) throw ZeroNormError("cosine: zero-norm operand");
    c = dot(a.values, b.values) / (na * nb);
  }
  return std::clamp(c, -1.0, 1.0);
}

inline double cosine(std::span<const float> a, std::span<const float> b) {
  const double d = dot(a, b);
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw ZeroNormError("cosine: zero-norm operand");
  return std::clamp(d / (na * nb), -1.0, 1.0);
}

}  // namespace geoforge
