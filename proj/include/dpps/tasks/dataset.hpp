//
// Copyright 2026 The DPPS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPPS_TASKS_DATASET_HPP_
#define DPPS_TASKS_DATASET_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dpps/error.hpp"
#include "dpps/rng.hpp"

namespace dpps {

// Row-major feature matrix plus integer labels.
struct Dataset {
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {inputs.data() + i * n_features, n_features};
  }

  // Rows [begin, end) as a new dataset.
  Dataset slice(std::size_t begin, std::size_t end) const {
    Dataset out{n_features, n_classes, {}, {}};
    out.inputs.assign(inputs.begin() + begin * n_features,
                      inputs.begin() + end * n_features);
    out.labels.assign(labels.begin() + begin, labels.begin() + end);
    return out;
  }
};

// Isotropic unit-variance Gaussian clusters. Class means sit at
// (separation / sqrt(2)) * q_c for orthonormal random directions q_c, so any
// two means are exactly `separation` apart. Labels are drawn uniformly.
inline Dataset make_synthetic_dataset(std::size_t n_examples,
                                      std::size_t n_features,
                                      std::size_t n_classes, double separation,
                                      std::uint64_t seed) {
  if (n_classes < 2) throw ValidationError("synthetic data needs >= 2 classes");
  if (n_classes > n_features) {
    throw ValidationError("synthetic data needs n_classes <= n_features");
  }
  Engine engine = make_stream(seed, kSharedStream, StreamKind::kDataset);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::vector<double>> means(n_classes,
                                         std::vector<double>(n_features));
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& q = means[c];
    for (double& x : q) x = normal(engine);
    for (std::size_t p = 0; p < c; ++p) {
      const double dot =
          std::inner_product(q.begin(), q.end(), means[p].begin(), 0.0);
      for (std::size_t k = 0; k < n_features; ++k) q[k] -= dot * means[p][k];
    }
    const double norm = std::sqrt(std::inner_product(q.begin(), q.end(), q.begin(), 0.0));
    for (double& x : q) x /= norm;
  }
  const double radius = separation / std::sqrt(2.0);

  Dataset data{n_features, n_classes, {}, {}};
  data.inputs.resize(n_examples * n_features);
  data.labels.resize(n_examples);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(n_classes) - 1);
  for (std::size_t i = 0; i < n_examples; ++i) {
    const int label = pick(engine);
    data.labels[i] = label;
    for (std::size_t k = 0; k < n_features; ++k) {
      data.inputs[i * n_features + k] = radius * means[label][k] + normal(engine);
    }
  }
  return data;
}

namespace internal {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open IDX file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes,
                               std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) |
         (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void require_bytes(const std::string& path, std::size_t expected,
                          std::size_t actual) {
  if (actual < expected) {
    throw ValidationError("truncated IDX file " + path + ": expected " +
                          std::to_string(expected) + " bytes, found " +
                          std::to_string(actual));
  }
}

}  // namespace internal

// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
// Pixels are scaled to [0, 1] by 1/255.
inline Dataset load_mnist_idx(const std::string& images_path,
                              const std::string& labels_path) {
  const auto images = internal::read_file(images_path);
  const auto labels = internal::read_file(labels_path);

  internal::require_bytes(images_path, 16, images.size());
  if (const auto magic = internal::read_be32(images, 0); magic != 0x00000803) {
    throw ValidationError("bad IDX image magic in " + images_path + ": " +
                          std::to_string(magic));
  }
  const std::size_t n_images = internal::read_be32(images, 4);
  const std::size_t rows = internal::read_be32(images, 8);
  const std::size_t cols = internal::read_be32(images, 12);
  const std::size_t pixels = rows * cols;
  internal::require_bytes(images_path, 16 + n_images * pixels, images.size());

  internal::require_bytes(labels_path, 8, labels.size());
  if (const auto magic = internal::read_be32(labels, 0); magic != 0x00000801) {
    throw ValidationError("bad IDX label magic in " + labels_path + ": " +
                          std::to_string(magic));
  }
  const std::size_t n_labels = internal::read_be32(labels, 4);
  internal::require_bytes(labels_path, 8 + n_labels, labels.size());
  if (n_labels != n_images) {
    throw ValidationError("IDX count mismatch: " + std::to_string(n_images) +
                          " images vs " + std::to_string(n_labels) + " labels");
  }

  Dataset data{pixels, 10, {}, {}};
  data.inputs.resize(n_images * pixels);
  for (std::size_t k = 0; k < n_images * pixels; ++k) {
    data.inputs[k] = static_cast<double>(images[16 + k]) / 255.0;
  }
  data.labels.resize(n_labels);
  for (std::size_t k = 0; k < n_labels; ++k) {
    data.labels[k] = labels[8 + k];
    if (data.labels[k] > 9) {
      throw ValidationError("IDX label out of range at index " + std::to_string(k));
    }
  }
  return data;
}

// Node `node_id`'s disjoint slice of the training indices (i mod N == id),
// reshuffled every epoch. The permutation of epoch e is a pure function of
// (master_seed, node_id, e).
class NodeShard {
 public:
  NodeShard(std::size_t node_id, std::size_t n_nodes, std::size_t n_examples,
            std::uint64_t master_seed)
      : node_id_(node_id), master_seed_(master_seed) {
    for (std::size_t i = node_id; i < n_examples; i += n_nodes) {
      indices_.push_back(i);
    }
    if (indices_.empty()) {
      throw ValidationError("node " + std::to_string(node_id) +
                            " received an empty data shard");
    }
  }

  const std::vector<std::size_t>& indices() const { return indices_; }
  std::uint64_t epoch() const { return epoch_; }

  std::vector<std::size_t> epoch_permutation(std::uint64_t epoch) const {
    std::vector<std::size_t> perm = indices_;
    Engine engine = make_stream(master_seed_, node_id_, StreamKind::kData, epoch);
    std::shuffle(perm.begin(), perm.end(), engine);
    return perm;
  }

  // Next batch of the current epoch; the last batch of an epoch may be short.
  std::vector<std::size_t> next_batch(std::size_t batch_size) {
    if (cursor_ == 0) order_ = epoch_permutation(epoch_);
    const std::size_t end = std::min(order_.size(), cursor_ + batch_size);
    std::vector<std::size_t> batch(order_.begin() + cursor_, order_.begin() + end);
    cursor_ = end;
    if (cursor_ == order_.size()) {
      cursor_ = 0;
      ++epoch_;
    }
    return batch;
  }

  std::size_t rounds_per_epoch(std::size_t batch_size) const {
    return (indices_.size() + batch_size - 1) / batch_size;
  }

 private:
  std::size_t node_id_;
  std::uint64_t master_seed_;
  std::vector<std::size_t> indices_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
};

}  // namespace dpps

#endif  // DPPS_TASKS_DATASET_HPP_
