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

// Transmission-time compression: global unstructured magnitude pruning and
// weight quantization (power-of-two scaled integers, or sign binarization),
// plus the fake-quantization hooks used for quantization-aware training.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fsqz/error.hpp"
#include "fsqz/nn.hpp"

namespace fsqz {

struct PruneReport {
  double rate_requested = 0.0;
  double threshold = 0.0;  // largest pruned magnitude, 0 when nothing is pruned
  std::size_t pruned = 0;  // floor(rate * prunable)
  std::size_t zeros_after = 0;
  std::size_t n = 0;
};

namespace detail {

/// Sort key for pruning order: magnitude first, index second. NaN sorts last.
struct MagnitudeKey {
  float mag;
  std::uint32_t index;

  friend bool operator<(const MagnitudeKey& a, const MagnitudeKey& b) {
    return a.mag < b.mag || (a.mag == b.mag && a.index < b.index);
  }
};

inline float magnitude(float v) {
  return std::isnan(v) ? std::numeric_limits<float>::infinity() : std::abs(v);
}

}  // namespace detail

/// The m-th smallest absolute value of v (1-based), or 0 when m == 0.
/// Linear-time selection.
inline double select_threshold(std::span<const float> v, std::size_t m) {
  if (m > v.size()) throw InternalError("select_threshold: m exceeds vector length");
  if (m == 0) return 0.0;
  std::vector<float> mags(v.size());
  std::transform(v.begin(), v.end(), mags.begin(), detail::magnitude);
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(m - 1), mags.end());
  return mags[m - 1];
}

/// Zeroes the floor(rate * n_prunable) smallest-magnitude prunable entries.
/// Ties at the cutoff go to the lower index. `exclude` may be empty (nothing
/// excluded) or one flag per entry.
inline std::pair<ParamVector, PruneReport> global_magnitude_prune(std::span<const float> v, double rate,
                                                                  const std::vector<bool>& exclude = {}) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("pruning rate must lie in [0, 1]");
  if (!exclude.empty() && exclude.size() != v.size()) throw ShapeError("exclusion mask length mismatch");
  if (v.size() > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("parameter vector too long");

  std::vector<detail::MagnitudeKey> keys;
  keys.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    if (exclude.empty() || !exclude[i]) keys.push_back({detail::magnitude(v[i]), static_cast<std::uint32_t>(i)});

  PruneReport report;
  report.rate_requested = rate;
  report.n = v.size();
  report.pruned = static_cast<std::size_t>(std::floor(rate * static_cast<double>(keys.size())));

  ParamVector out(v.begin(), v.end());
  if (report.pruned > 0) {
    const auto kth = keys.begin() + static_cast<std::ptrdiff_t>(report.pruned - 1);
    std::nth_element(keys.begin(), kth, keys.end());
    report.threshold = kth->mag;
    for (auto it = keys.begin(); it <= kth; ++it) out[it->index] = 0.0f;
  }
  report.zeros_after = static_cast<std::size_t>(std::count(out.begin(), out.end(), 0.0f));
  return {std::move(out), report};
}

/// Exclusion mask flagging every bias entry of a model with this spec.
inline std::vector<bool> bias_mask(const ModelSpec& spec) {
  std::vector<bool> mask;
  mask.reserve(spec.param_count());
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    mask.insert(mask.end(), spec.layer_sizes[l + 1] * spec.layer_sizes[l], false);
    mask.insert(mask.end(), spec.layer_sizes[l + 1], true);
  }
  return mask;
}

struct QuantLayer {
  std::vector<std::int8_t> codes;
  std::int8_t scale_exp = 0;  // scale = 2^scale_exp

  double scale() const { return std::ldexp(1.0, scale_exp); }
  bool operator==(const QuantLayer&) const = default;
};

/// Integer codes per layer (weights then biases of that layer). bits == 1
/// holds signs in {-1, +1} with scale 1.
struct QuantizedModel {
  int bits = 8;
  std::vector<QuantLayer> layers;

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.codes.size();
    return n;
  }
  bool operator==(const QuantizedModel&) const = default;
};

struct QuantScheme {
  int bits = 8;
  std::vector<double> per_layer_scales;
};

inline QuantScheme scheme_of(const QuantizedModel& q) {
  QuantScheme s{q.bits, {}};
  for (const auto& l : q.layers) s.per_layer_scales.push_back(l.scale());
  return s;
}

inline bool valid_bits(int bits) { return bits == 1 || bits == 4 || bits == 8; }

inline int qmax_for(int bits) { return (1 << (bits - 1)) - 1; }

/// Smallest exponent e with 2^e * qmax >= max_abs, clamped to the int8 range.
/// Zero layers get e = 0.
inline int power_of_two_exponent(double max_abs, int qmax) {
  if (max_abs == 0.0) return 0;
  int e = static_cast<int>(std::ceil(std::log2(max_abs / qmax)));
  while (std::ldexp(static_cast<double>(qmax), e - 1) >= max_abs) --e;
  while (std::ldexp(static_cast<double>(qmax), e) < max_abs) ++e;
  return std::clamp(e, -128, 127);
}

/// Per-group symmetric integer quantization with power-of-two scales and
/// round-half-away-from-zero. `group_sizes` partitions v.
inline QuantizedModel quantize_flat(std::span<const float> v, std::span<const std::size_t> group_sizes, int bits) {
  if (bits != 4 && bits != 8) throw ConfigError("integer quantization supports 4 or 8 bits, got " + std::to_string(bits));
  const int qmax = qmax_for(bits);
  QuantizedModel q;
  q.bits = bits;
  std::size_t off = 0;
  for (std::size_t size : group_sizes) {
    if (off + size > v.size()) throw ShapeError("quantization groups exceed vector length");
    const auto group = v.subspan(off, size);
    double max_abs = 0.0;
    for (float w : group) {
      if (!std::isfinite(w)) throw NumericError("cannot quantize non-finite weight");
      max_abs = std::max(max_abs, static_cast<double>(std::abs(w)));
    }
    QuantLayer layer;
    layer.scale_exp = static_cast<std::int8_t>(power_of_two_exponent(max_abs, qmax));
    layer.codes.reserve(size);
    for (float w : group) {
      const double c = std::round(std::ldexp(static_cast<double>(w), -layer.scale_exp));
      layer.codes.push_back(static_cast<std::int8_t>(std::clamp(c, -static_cast<double>(qmax), static_cast<double>(qmax))));
    }
    q.layers.push_back(std::move(layer));
    off += size;
  }
  if (off != v.size()) throw ShapeError("quantization groups do not cover the vector");
  return q;
}

/// Sign binarization, sign(0) = +1, no scaling.
inline QuantizedModel binarize_flat(std::span<const float> v, std::span<const std::size_t> group_sizes) {
  QuantizedModel q;
  q.bits = 1;
  std::size_t off = 0;
  for (std::size_t size : group_sizes) {
    if (off + size > v.size()) throw ShapeError("binarization groups exceed vector length");
    QuantLayer layer;
    layer.codes.reserve(size);
    for (float w : v.subspan(off, size)) layer.codes.push_back(w < 0.0f ? -1 : 1);
    q.layers.push_back(std::move(layer));
    off += size;
  }
  if (off != v.size()) throw ShapeError("binarization groups do not cover the vector");
  return q;
}

namespace detail {

inline std::vector<std::size_t> group_sizes_of(const ModelState& state) {
  std::vector<std::size_t> sizes;
  for (const auto& l : state.layers) sizes.push_back(l.weight.data.size() + l.bias.size());
  return sizes;
}

inline ModelSpec spec_of(const ModelState& state) {
  ModelSpec spec;
  if (state.layers.empty()) return spec;
  spec.layer_sizes.push_back(state.layers.front().weight.cols);
  for (const auto& l : state.layers) spec.layer_sizes.push_back(l.weight.rows);
  return spec;
}

}  // namespace detail

inline QuantizedModel quantize_int(const ModelState& state, int bits) {
  const auto flat = flatten(state);
  return quantize_flat(flat, detail::group_sizes_of(state), bits);
}

inline QuantizedModel binarize(const ModelState& state) {
  const auto flat = flatten(state);
  return binarize_flat(flat, detail::group_sizes_of(state));
}

/// Dispatch on bit width: 1 -> binarize, 4/8 -> integer codes.
inline QuantizedModel quantize(const ModelState& state, int bits) {
  if (bits == 1) return binarize(state);
  return quantize_int(state, bits);
}

inline QuantizedModel quantize(std::span<const float> v, std::span<const std::size_t> group_sizes, int bits) {
  if (bits == 1) return binarize_flat(v, group_sizes);
  return quantize_flat(v, group_sizes, bits);
}

/// code * 2^scale_exp for every entry; exact in float for in-range codes.
inline ParamVector dequantize_flat(const QuantizedModel& q) {
  ParamVector out;
  out.reserve(q.param_count());
  for (const auto& l : q.layers)
    for (std::int8_t c : l.codes) out.push_back(std::ldexp(static_cast<float>(c), l.scale_exp));
  return out;
}

inline ModelState dequantize(const QuantizedModel& q, const ModelSpec& spec) {
  const auto expected = spec.layer_param_counts();
  if (q.layers.size() != expected.size()) throw ShapeError("quantized model has the wrong number of layers");
  for (std::size_t l = 0; l < expected.size(); ++l)
    if (q.layers[l].codes.size() != expected[l]) throw ShapeError("quantized layer " + std::to_string(l) + " has the wrong length");
  const auto flat = dequantize_flat(q);
  return unflatten(spec, flat);
}

/// Weights the forward pass sees during quantization-aware training.
inline ModelState qat_forward_hook(const ModelState& latent, int bits) {
  if (!valid_bits(bits)) throw ConfigError("unsupported bit width " + std::to_string(bits));
  return dequantize(quantize(latent, bits), detail::spec_of(latent));
}

/// Straight-through estimator. For 1 bit the gradient is cut where the latent
/// weight has left [-1, 1].
inline Gradient qat_backward_rule(Gradient grad, const ModelState& latent, int bits) {
  if (bits != 1) return grad;
  for (std::size_t l = 0; l < grad.layers.size(); ++l) {
    auto& g = grad.layers[l];
    const auto& w = latent.layers[l];
    for (std::size_t i = 0; i < g.weight.data.size(); ++i)
      if (std::abs(w.weight.data[i]) > 1.0f) g.weight.data[i] = 0.0;
    for (std::size_t i = 0; i < g.bias.size(); ++i)
      if (std::abs(w.bias[i]) > 1.0f) g.bias[i] = 0.0;
  }
  return grad;
}

/// Latent weight clipping applied after every optimizer step in 1-bit mode.
inline void clip_latent(ModelState& latent) {
  for (auto& l : latent.layers) {
    for (float& w : l.weight.data) w = std::clamp(w, -1.0f, 1.0f);
    for (float& b : l.bias) b = std::clamp(b, -1.0f, 1.0f);
  }
}

}  // namespace fsqz
