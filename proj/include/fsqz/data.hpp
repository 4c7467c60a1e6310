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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fsqz/error.hpp"
#include "fsqz/nn.hpp"
#include "fsqz/random.hpp"

namespace fsqz {

struct Dataset {
  Matrix<float> features;  // rows = examples
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols; }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.num_classes = num_classes;
    out.features = Matrix<float>(indices.size(), features.cols);
    out.labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
      const std::size_t src = indices[r];
      if (src >= size()) throw InternalError("subset index out of range");
      std::copy_n(features.row(src).begin(), features.cols, out.features.row(r).begin());
      out.labels.push_back(labels[src]);
    }
    return out;
  }

  std::vector<std::size_t> class_histogram() const {
    std::vector<std::size_t> h(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) ++h[static_cast<std::size_t>(y)];
    return h;
  }

  void validate() const {
    if (num_classes < 1) throw DataError("dataset needs at least one class");
    if (features.rows != labels.size()) throw DataError("feature rows and labels disagree");
    for (int y : labels)
      if (y < 0 || y >= num_classes) throw DataError("label outside [0, num_classes)");
    for (float v : features.data)
      if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }
};

/// Gaussian blobs: one seeded N(0, 1) centroid per class, examples drawn with
/// isotropic noise of scale `spread`. Rows are grouped by class.
inline Dataset gen_blobs(int num_classes, std::size_t dim, std::size_t per_class, double spread, std::uint64_t seed) {
  if (num_classes < 1 || dim < 1 || per_class < 1) throw ConfigError("blob counts must be >= 1");
  if (!(spread >= 0.0)) throw ConfigError("blob spread must be >= 0");
  Rng rng(seed);
  Matrix<double> centroids(static_cast<std::size_t>(num_classes), dim);
  for (double& c : centroids.data) c = standard_normal(rng);

  Dataset ds;
  ds.num_classes = num_classes;
  ds.features = Matrix<float>(static_cast<std::size_t>(num_classes) * per_class, dim);
  std::size_t r = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k, ++r) {
      for (std::size_t d = 0; d < dim; ++d)
        ds.features(r, d) = static_cast<float>(centroids(static_cast<std::size_t>(c), d) + spread * standard_normal(rng));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

/// Splits off the first `head` examples of every class (in row order) from
/// the rest. Returns {head part, tail part}.
inline std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, std::size_t head) {
  std::vector<std::size_t> seen(static_cast<std::size_t>(ds.num_classes), 0);
  std::vector<std::size_t> first;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& s = seen[static_cast<std::size_t>(ds.labels[i])];
    (s++ < head ? first : rest).push_back(i);
  }
  return {ds.subset(first), ds.subset(rest)};
}

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off, const std::string& what) {
  if (off + 4 > buf.size()) throw IoError(what + ": truncated IDX header");
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) | (std::uint32_t{buf[off + 2]} << 8) |
         std::uint32_t{buf[off + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX image/label pair (the MNIST container). Pixels are scaled to
/// [0, 1] and each image becomes one feature row.
inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = detail::read_file(images_path);
  const auto labels = detail::read_file(labels_path);
  const std::string in = images_path.string();
  const std::string ln = labels_path.string();

  if (detail::read_be32(images, 0, in) != kIdxImagesMagic) throw FormatError(in + ": bad IDX image magic");
  if (detail::read_be32(labels, 0, ln) != kIdxLabelsMagic) throw FormatError(ln + ": bad IDX label magic");
  const std::size_t n = detail::read_be32(images, 4, in);
  const std::size_t rows = detail::read_be32(images, 8, in);
  const std::size_t cols = detail::read_be32(images, 12, in);
  const std::size_t n_labels = detail::read_be32(labels, 4, ln);
  if (n != n_labels)
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) + " labels");
  const std::size_t dim = rows * cols;
  if (images.size() < 16 + n * dim) throw IoError(in + ": truncated image data");
  if (labels.size() < 8 + n) throw IoError(ln + ": truncated label data");

  Dataset ds;
  ds.features = Matrix<float>(n, dim);
  for (std::size_t i = 0; i < n * dim; ++i) ds.features.data[i] = static_cast<float>(images[16 + i]) / 255.0f;
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels.push_back(labels[8 + i]);
    max_label = std::max(max_label, static_cast<int>(labels[8 + i]));
  }
  ds.num_classes = max_label + 1;
  return ds;
}

struct PartitionSpec {
  std::size_t num_clients = 1;
  double alpha = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a positive finite number");
  }
};

struct Partition {
  std::vector<std::vector<std::size_t>> assignment;  // per client, ascending example indices

  std::size_t num_clients() const { return assignment.size(); }
};

/// One draw from Dirichlet(alpha * 1_k) via normalized Gamma variates.
inline std::vector<double> dirichlet_draw(Rng& rng, std::size_t k, double alpha) {
  std::vector<double> p(k);
  double sum = 0.0;
  for (double& v : p) sum += (v = gamma_draw(rng, alpha));
  if (!(sum > 0.0)) {
    // Every gamma draw underflowed (tiny alpha); the limit puts all mass on one client.
    std::fill(p.begin(), p.end(), 0.0);
    p[rng() % k] = 1.0;
    return p;
  }
  for (double& v : p) v /= sum;
  return p;
}

/// Integer counts summing to `total` proportional to `p`; leftover units go
/// to the largest fractional parts, ties to the lowest index.
inline std::vector<std::size_t> largest_remainder(std::span<const double> p, std::size_t total) {
  std::vector<std::size_t> counts(p.size());
  std::vector<double> frac(p.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double exact = p[k] * static_cast<double>(total);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    frac[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  // Floating error can push the floors past the total; trim from the back.
  for (std::size_t k = p.size(); assigned > total && k-- > 0;) {
    const std::size_t take = std::min(counts[k], assigned - total);
    counts[k] -= take;
    assigned -= take;
  }
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % order.size()) {
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

/// Label-skew partition: each class is split across clients by its own
/// Dirichlet(alpha) proportion vector.
inline Partition lda_partition(const Dataset& ds, const PartitionSpec& spec) {
  spec.validate();
  if (ds.size() == 0) throw DataError("cannot partition an empty dataset");
  Rng rng(spec.seed);
  Partition part;
  part.assignment.resize(spec.num_clients);
  for (int c = 0; c < ds.num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == c) idx.push_back(i);
    seeded_shuffle(idx.begin(), idx.end(), rng);
    const auto p = dirichlet_draw(rng, spec.num_clients, spec.alpha);
    const auto counts = largest_remainder(p, idx.size());
    std::size_t pos = 0;
    for (std::size_t k = 0; k < spec.num_clients; ++k) {
      auto& dst = part.assignment[k];
      dst.insert(dst.end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                 idx.begin() + static_cast<std::ptrdiff_t>(pos + counts[k]));
      pos += counts[k];
    }
  }
  for (auto& a : part.assignment) std::sort(a.begin(), a.end());
  return part;
}

struct PartitionStats {
  std::vector<std::vector<std::size_t>> histograms;  // [client][class]
  std::vector<std::size_t> counts;                   // examples per client
  std::vector<std::size_t> global;                   // dataset class histogram
  std::vector<double> tv;                            // client vs global total variation; 0 for empty clients
  double mean_tv = 0.0;                              // over non-empty clients
};

inline double total_variation(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  const double na = std::accumulate(a.begin(), a.end(), 0.0);
  const double nb = std::accumulate(b.begin(), b.end(), 0.0);
  if (na == 0.0 || nb == 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += std::abs(static_cast<double>(a[c]) / na - static_cast<double>(b[c]) / nb);
  return 0.5 * s;
}

inline PartitionStats partition_stats(const Partition& p, const Dataset& ds) {
  PartitionStats st;
  const auto classes = static_cast<std::size_t>(ds.num_classes);
  st.global = ds.class_histogram();
  std::size_t nonempty = 0;
  for (const auto& client : p.assignment) {
    std::vector<std::size_t> h(classes, 0);
    for (std::size_t i : client) {
      if (i >= ds.size()) throw InternalError("partition index " + std::to_string(i) + " out of range");
      ++h[static_cast<std::size_t>(ds.labels[i])];
    }
    st.counts.push_back(client.size());
    st.tv.push_back(total_variation(h, st.global));
    if (!client.empty()) {
      st.mean_tv += st.tv.back();
      ++nonempty;
    }
    st.histograms.push_back(std::move(h));
  }
  if (nonempty > 0) st.mean_tv /= static_cast<double>(nonempty);
  return st;
}

}  // namespace fsqz
