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
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geoforge/core/checkpoint.hpp"
#include "geoforge/core/error.hpp"
#include "geoforge/core/rng.hpp"

namespace geoforge {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Row-wise L2 normalization; returns the norms. Throws on a zero row.
inline Eigen::VectorXd normalize_rows(Matrix& m) {
  Eigen::VectorXd norms = m.rowwise().norm();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!(norms(i) > 0.0) || !std::isfinite(norms(i))) {
      throw ZeroNormError("row " + std::to_string(i) + " has zero or non-finite norm before normalization");
    }
    m.row(i) /= norms(i);
  }
  return norms;
}

/// Backward of y = x/‖x‖ per row: dx = (dy − y·(y·dy)) / ‖x‖.
inline Matrix normalize_rows_backward(const Matrix& y, const Eigen::VectorXd& norms, const Matrix& dy) {
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double proj = y.row(i).dot(dy.row(i));
    dx.row(i) = (dy.row(i) - proj * y.row(i)) / norms(i);
  }
  return dx;
}

inline Matrix to_matrix(std::span<const float> row) {
  Matrix m(1, static_cast<Eigen::Index>(row.size()));
  for (std::size_t i = 0; i < row.size(); ++i) m(0, Eigen::Index(i)) = row[i];
  return m;
}

template <typename Derived>
Tensor matrix_to_tensor(const Eigen::MatrixBase<Derived>& m) {
  Tensor t{std::uint32_t(m.rows()), std::uint32_t(m.cols()), {}};
  t.data.reserve(std::size_t(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(static_cast<float>(m(r, c)));
  }
  return t;
}

inline Matrix tensor_to_matrix(const Tensor& t) {
  Matrix m(t.rows, t.cols);
  for (std::size_t i = 0; i < t.data.size(); ++i) m.data()[i] = t.data[i];
  return m;
}

inline std::vector<float> row_to_floats(const Matrix& m, Eigen::Index r) {
  std::vector<float> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) out[std::size_t(c)] = static_cast<float>(m(r, c));
  return out;
}

/// Fully connected stack with ReLU between layers and an L2-normalized output.
/// Weights are stored input-major: z = h·W + b. Biases start slightly off zero
/// so a row whose hidden units are all inactive still has a direction.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
    Matrix output;               // normalized rows
    Eigen::VectorXd norms;
  };

  Mlp() = default;

  Mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim, std::uint64_t seed) {
    if (input_dim == 0 || output_dim == 0) throw InvalidArgument("Mlp: dims must be positive");
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
    for (auto h : hidden) add(h);
    add(output_dim);
  }

  std::vector<Matrix> weights;
  std::vector<RowVector> biases;

  std::size_t input_dim() const { return weights.empty() ? 0 : std::size_t(weights.front().rows()); }
  std::size_t output_dim() const { return weights.empty() ? 0 : std::size_t(weights.back().cols()); }
  std::size_t layers() const { return weights.size(); }

  Cache forward(const Matrix& x) const {
    if (std::size_t(x.cols()) != input_dim()) {
      throw DimensionError("Mlp: input has dimension " + std::to_string(x.cols()) + ", expected " +
                           std::to_string(input_dim()));
    }
    Cache c;
    Matrix h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      c.inputs.push_back(h);
      Matrix z = h * weights[l];
      z.rowwise() += biases[l];
      c.pre.push_back(z);
      h = (l + 1 < weights.size()) ? Matrix(z.cwiseMax(0.0)) : z;
    }
    if (!h.allFinite()) throw NumericError("Mlp: non-finite activations");
    c.norms = normalize_rows(h);
    c.output = std::move(h);
    return c;
  }

  Matrix encode(const Matrix& x) const { return forward(x).output; }

  /// Gradients with the same shapes as the model.
  struct Grads {
    std::vector<Matrix> weights;
    std::vector<RowVector> biases;
  };

  Grads zero_grads() const {
    Grads g;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      g.weights.push_back(Matrix::Zero(weights[l].rows(), weights[l].cols()));
      g.biases.push_back(RowVector::Zero(biases[l].cols()));
    }
    return g;
  }

  /// Accumulates parameter gradients for d(loss)/d(output) into `g`; returns
  /// d(loss)/d(input).
  Matrix backward(const Cache& c, const Matrix& d_output, Grads& g) const {
    Matrix dz = normalize_rows_backward(c.output, c.norms, d_output);
    for (std::size_t l = weights.size(); l-- > 0;) {
      if (l + 1 < weights.size()) dz = dz.cwiseProduct((c.pre[l].array() > 0.0).cast<double>().matrix());
      g.weights[l].noalias() += c.inputs[l].transpose() * dz;
      g.biases[l] += dz.colwise().sum();
      dz = dz * weights[l].transpose();
    }
    return dz;
  }

  void apply(const Grads& g, double step) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] -= step * g.weights[l];
      biases[l] -= step * g.biases[l];
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += std::size_t(weights[l].size() + biases[l].size());
    return n;
  }

  /// Visits every parameter in a fixed order (layer, weights then bias).
  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (Eigen::Index i = 0; i < weights[l].size(); ++i) fn(weights[l].data()[i]);
      for (Eigen::Index i = 0; i < biases[l].size(); ++i) fn(biases[l].data()[i]);
    }
  }

  static double squared_norm(const Grads& g) {
    double s = 0.0;
    for (std::size_t l = 0; l < g.weights.size(); ++l) s += g.weights[l].squaredNorm() + g.biases[l].squaredNorm();
    return s;
  }

  static std::vector<double> flatten(const Grads& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      out.insert(out.end(), g.weights[l].data(), g.weights[l].data() + g.weights[l].size());
      out.insert(out.end(), g.biases[l].data(), g.biases[l].data() + g.biases[l].size());
    }
    return out;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.weights.size() != b.weights.size()) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
      if (a.weights[l].rows() != b.weights[l].rows() || a.weights[l].cols() != b.weights[l].cols()) return false;
      if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    }
    return true;
  }
};

}  // namespace geoforge
