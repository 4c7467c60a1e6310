// Copyright 2026 The fsqz Authors.
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

// Small fully connected ReLU network with hand-written backpropagation and
// SGD with classical momentum. Parameters are stored as 32-bit floats; every
// reduction (activations, loss, gradients, velocity) is carried in double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fsqz/error.hpp"
#include "fsqz/random.hpp"

namespace fsqz {

/// Dense row-major matrix.
template <class T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

using ParamVector = std::vector<float>;

enum class Activation { relu };

struct ModelSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., classes
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  void validate() const {
    if (layer_sizes.size() < 2) throw ConfigError("model needs at least an input and an output size");
    for (std::size_t s : layer_sizes)
      if (s == 0) throw ConfigError("model layer sizes must be >= 1");
  }

  std::size_t layer_count() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t num_classes() const { return layer_sizes.back(); }

  /// Parameters of layer l (weights then biases).
  std::size_t layer_param_count(std::size_t l) const {
    return layer_sizes[l + 1] * layer_sizes[l] + layer_sizes[l + 1];
  }

  std::vector<std::size_t> layer_param_counts() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < layer_count(); ++l) out.push_back(layer_param_count(l));
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer_count(); ++l) n += layer_param_count(l);
    return n;
  }

  bool operator==(const ModelSpec&) const = default;
};

template <class T>
struct Layer {
  Matrix<T> weight;  // out x in
  std::vector<T> bias;

  bool operator==(const Layer&) const = default;
};

/// Per-layer parameter tensors in (W1, b1, W2, b2, ...) order. Instantiated
/// with float for model state and double for gradients.
template <class T>
struct BasicModel {
  std::vector<Layer<T>> layers;

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
    return n;
  }

  bool operator==(const BasicModel&) const = default;
};

using ModelState = BasicModel<float>;
using Gradient = BasicModel<double>;

template <class T>
BasicModel<T> zeros_like_spec(const ModelSpec& spec) {
  spec.validate();
  BasicModel<T> m;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    m.layers.push_back(Layer<T>{Matrix<T>(out, in), std::vector<T>(out, T{})});
  }
  return m;
}

template <class To, class From>
BasicModel<To> zeros_like(const BasicModel<From>& ref) {
  BasicModel<To> m;
  for (const auto& l : ref.layers)
    m.layers.push_back(Layer<To>{Matrix<To>(l.weight.rows, l.weight.cols), std::vector<To>(l.bias.size(), To{})});
  return m;
}

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
inline ModelState init_model(const ModelSpec& spec) {
  ModelState state = zeros_like_spec<float>(spec);
  Rng rng(spec.seed);
  for (auto& layer : state.layers) {
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.weight.cols));
    for (float& w : layer.weight.data) w = static_cast<float>(scale * standard_normal(rng));
  }
  return state;
}

/// W1 row-major, b1, W2 row-major, b2, ...
template <class T>
std::vector<T> flatten(const BasicModel<T>& model) {
  std::vector<T> out;
  out.reserve(model.param_count());
  for (const auto& l : model.layers) {
    out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

template <class T>
BasicModel<T> unflatten_as(const ModelSpec& spec, std::span<const T> values) {
  if (values.size() != spec.param_count())
    throw ShapeError("parameter vector has " + std::to_string(values.size()) + " entries, model expects " +
                     std::to_string(spec.param_count()));
  BasicModel<T> model = zeros_like_spec<T>(spec);
  auto it = values.begin();
  for (auto& l : model.layers) {
    std::copy_n(it, l.weight.data.size(), l.weight.data.begin());
    it += static_cast<std::ptrdiff_t>(l.weight.data.size());
    std::copy_n(it, l.bias.size(), l.bias.begin());
    it += static_cast<std::ptrdiff_t>(l.bias.size());
  }
  return model;
}

inline ModelState unflatten(const ModelSpec& spec, std::span<const float> values) {
  return unflatten_as<float>(spec, values);
}

namespace detail {

inline void check_batch(const ModelState& state, const Matrix<float>& batch) {
  if (state.layers.empty()) throw ShapeError("model has no layers");
  if (batch.cols != state.layers.front().weight.cols)
    throw ShapeError("batch has " + std::to_string(batch.cols) + " features, model expects " +
                     std::to_string(state.layers.front().weight.cols));
}

/// Affine map of one example through one layer, accumulated in double.
inline void affine(const Layer<float>& layer, std::span<const double> in, std::vector<double>& out) {
  out.assign(layer.weight.rows, 0.0);
  for (std::size_t j = 0; j < layer.weight.rows; ++j) {
    const float* w = layer.weight.data.data() + j * layer.weight.cols;
    double acc = layer.bias[j];
    for (std::size_t i = 0; i < layer.weight.cols; ++i) acc += static_cast<double>(w[i]) * in[i];
    out[j] = acc;
  }
}

/// Pre-activations of every layer for one example. acts[0] is the input.
inline void forward_example(const ModelState& state, std::span<const float> x, std::vector<std::vector<double>>& acts,
                            std::vector<std::vector<double>>& pre) {
  const std::size_t depth = state.layers.size();
  acts.resize(depth + 1);
  pre.resize(depth);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < depth; ++l) {
    affine(state.layers[l], acts[l], pre[l]);
    acts[l + 1] = pre[l];
    if (l + 1 < depth)
      for (double& a : acts[l + 1]) a = a > 0.0 ? a : 0.0;
  }
}

}  // namespace detail

inline Matrix<float> forward(const ModelState& state, const Matrix<float>& batch) {
  detail::check_batch(state, batch);
  Matrix<float> logits(batch.rows, state.layers.back().weight.rows);
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<double>> pre;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    detail::forward_example(state, batch.row(r), acts, pre);
    const auto& out = acts.back();
    for (std::size_t c = 0; c < out.size(); ++c) logits(r, c) = static_cast<float>(out[c]);
  }
  return logits;
}

struct LossAndGrad {
  double loss = 0.0;  // mean softmax cross-entropy
  Gradient grad;      // gradient of the mean loss
};

inline LossAndGrad loss_and_grad(const ModelState& state, const Matrix<float>& batch, std::span<const int> labels) {
  detail::check_batch(state, batch);
  if (batch.rows == 0) throw DataError("empty batch");
  if (labels.size() != batch.rows) throw ShapeError("label count does not match batch rows");
  const std::size_t classes = state.layers.back().weight.rows;
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");

  LossAndGrad result;
  result.grad = zeros_like<double>(state);
  const std::size_t depth = state.layers.size();
  const double inv_n = 1.0 / static_cast<double>(batch.rows);

  std::vector<std::vector<double>> acts;
  std::vector<std::vector<double>> pre;
  std::vector<double> delta;
  std::vector<double> prev_delta;
  double loss_sum = 0.0;

  for (std::size_t r = 0; r < batch.rows; ++r) {
    detail::forward_example(state, batch.row(r), acts, pre);
    const auto& logits = acts.back();
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    const auto y = static_cast<std::size_t>(labels[r]);
    loss_sum += log_z - logits[y];

    delta.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) delta[c] = (std::exp(logits[c] - log_z) - (c == y ? 1.0 : 0.0)) * inv_n;

    for (std::size_t l = depth; l-- > 0;) {
      const Layer<float>& layer = state.layers[l];
      Layer<double>& g = result.grad.layers[l];
      const auto& in = acts[l];
      for (std::size_t j = 0; j < layer.weight.rows; ++j) {
        const double d = delta[j];
        g.bias[j] += d;
        if (d == 0.0) continue;
        double* gw = g.weight.data.data() + j * layer.weight.cols;
        for (std::size_t i = 0; i < layer.weight.cols; ++i) gw[i] += d * in[i];
      }
      if (l == 0) break;
      prev_delta.assign(layer.weight.cols, 0.0);
      for (std::size_t j = 0; j < layer.weight.rows; ++j) {
        const double d = delta[j];
        if (d == 0.0) continue;
        const float* w = layer.weight.data.data() + j * layer.weight.cols;
        for (std::size_t i = 0; i < layer.weight.cols; ++i) prev_delta[i] += static_cast<double>(w[i]) * d;
      }
      for (std::size_t i = 0; i < prev_delta.size(); ++i)
        if (pre[l - 1][i] <= 0.0) prev_delta[i] = 0.0;
      delta.swap(prev_delta);
    }
  }
  result.loss = loss_sum * inv_n;
  return result;
}

struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.0;
  std::vector<double> velocity;  // flatten order, same length as the parameters

  static OptimizerState fresh(double lr, double momentum, std::size_t n) {
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    return OptimizerState{lr, momentum, std::vector<double>(n, 0.0)};
  }
};

/// v <- momentum * v + g;  w <- w - lr * v. The step is refused if any
/// gradient entry is non-finite.
inline void sgd_step(ModelState& state, OptimizerState& opt, const Gradient& grad) {
  const std::size_t n = state.param_count();
  if (grad.param_count() != n || opt.velocity.size() != n || grad.layers.size() != state.layers.size())
    throw ShapeError("gradient, velocity and parameters disagree in size");
  for (const auto& l : grad.layers) {
    for (double g : l.weight.data)
      if (!std::isfinite(g)) throw NumericError("non-finite gradient");
    for (double g : l.bias)
      if (!std::isfinite(g)) throw NumericError("non-finite gradient");
  }
  std::size_t k = 0;
  auto update = [&](float& w, double g) {
    double& v = opt.velocity[k++];
    v = opt.momentum * v + g;
    w = static_cast<float>(static_cast<double>(w) - opt.learning_rate * v);
  };
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    auto& layer = state.layers[l];
    const auto& g = grad.layers[l];
    for (std::size_t i = 0; i < layer.weight.data.size(); ++i) update(layer.weight.data[i], g.weight.data[i]);
    for (std::size_t i = 0; i < layer.bias.size(); ++i) update(layer.bias[i], g.bias[i]);
  }
}

/// Mean softmax cross-entropy without the backward pass.
inline double mean_loss(const ModelState& state, const Matrix<float>& batch, std::span<const int> labels) {
  detail::check_batch(state, batch);
  if (batch.rows == 0) throw DataError("empty batch");
  if (labels.size() != batch.rows) throw ShapeError("label count does not match batch rows");
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<double>> pre;
  double sum = 0.0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    detail::forward_example(state, batch.row(r), acts, pre);
    const auto& logits = acts.back();
    const auto y = static_cast<std::size_t>(labels[r]);
    if (y >= logits.size()) throw DataError("label outside the class range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    sum += mx + std::log(z) - logits[y];
  }
  return sum / static_cast<double>(batch.rows);
}

/// Index of the largest logit in each row; ties go to the lowest class.
inline std::vector<int> predict(const ModelState& state, const Matrix<float>& batch) {
  const Matrix<float> logits = forward(state, batch);
  std::vector<int> out(batch.rows);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace fsqz
