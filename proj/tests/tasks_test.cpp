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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "dpps/protocol.hpp"
#include "dpps/tasks/dataset.hpp"
#include "dpps/tasks/evaluate.hpp"
#include "dpps/tasks/mlp.hpp"

namespace dpps {
namespace {

TEST(MlpTest, BottleneckBlocks) {
  const auto spec = MlpSpec::bottleneck(784, 10, 10);
  const auto blocks = spec.blocks();
  ASSERT_EQ(blocks.size(), 3u);
  for (const auto& b : blocks) EXPECT_EQ(b.size, 7840u);
  EXPECT_EQ(spec.n_params(), 23520u);
}

TEST(MlpTest, ZeroWeightsGiveUniformLoss) {
  const auto spec = MlpSpec::bottleneck(5, 3, 10);
  Dataset data{5, 10, std::vector<double>(50, 0.7), {}};
  for (int c = 0; c < 10; ++c) data.labels.push_back(c);
  std::vector<std::size_t> batch(10);
  for (std::size_t i = 0; i < 10; ++i) batch[i] = i;
  const auto r = mlp_loss_and_grad(spec, Vector(spec.n_params(), 0.0), data, batch);
  EXPECT_NEAR(r.loss, std::log(10.0), 1e-12);
}

TEST(MlpTest, DuplicatedExampleGivesSameGradient) {
  const auto spec = MlpSpec::bottleneck(4, 2, 3);
  const Dataset data = make_synthetic_dataset(10, 4, 3, 2.0, 3);
  Engine e = make_stream(3, 0, StreamKind::kInit);
  const Vector p = init_mlp_params(spec, e);
  const std::vector<std::size_t> one = {4}, many = {4, 4, 4};
  const auto a = mlp_loss_and_grad(spec, p, data, one);
  const auto b = mlp_loss_and_grad(spec, p, data, many);
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  for (std::size_t k = 0; k < a.grad.size(); ++k) EXPECT_NEAR(a.grad[k], b.grad[k], 1e-14);
}

TEST(MlpTest, GradientMatchesCentralDifferences) {
  const auto spec = MlpSpec::bottleneck(8, 4, 4);
  const Dataset data = make_synthetic_dataset(40, 8, 4, 3.0, 5);
  std::vector<std::size_t> batch(20);
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = 2 * i;
  std::mt19937_64 rng(9);
  const double h = 1e-5;
  for (int point = 0; point < 3; ++point) {
    Engine e = make_stream(100 + point, 0, StreamKind::kInit);
    Vector p = init_mlp_params(spec, e);
    for (double& x : p) x *= 1.0 + point;  // move away from the init scale
    const auto exact = mlp_loss_and_grad(spec, p, data, batch);
    std::size_t offset = 0;
    for (const auto& block : spec.blocks()) {
      std::uniform_int_distribution<std::size_t> pick(offset, offset + block.size - 1);
      for (int probe = 0; probe < 10; ++probe) {
        const std::size_t k = pick(rng);
        Vector plus = p, minus = p;
        plus[k] += h;
        minus[k] -= h;
        const double fd = (mlp_loss_and_grad(spec, plus, data, batch).loss -
                           mlp_loss_and_grad(spec, minus, data, batch).loss) /
                          (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(exact.grad[k]), 1e-6});
        EXPECT_LT(std::abs(fd - exact.grad[k]) / denom, 1e-4)
            << "coordinate " << k << " at point " << point;
      }
      offset += block.size;
    }
  }
}

TEST(MlpTest, TaskSplitsGradientByPartition) {
  const auto spec = MlpSpec::bottleneck(4, 2, 3);
  const Dataset data = make_synthetic_dataset(20, 4, 3, 2.0, 6);
  const MlpTask task(spec, partition_model(spec.blocks(), {PartitionScheme::kShareFirstK, 1, {}}),
                     data);
  Engine e = make_stream(6, 0, StreamKind::kInit);
  const Vector p = init_mlp_params(spec, e);
  const auto [s, l] = task.partition().split(p);
  const std::vector<std::size_t> batch = {0, 1, 2, 3};
  const auto parts = task.loss_and_grads(s, l, batch);
  const auto whole = mlp_loss_and_grad(spec, p, data, batch);
  EXPECT_EQ(parts.loss, whole.loss);
  EXPECT_EQ(task.partition().join(parts.shared, parts.local), whole.grad);
}

TEST(MlpTest, NonFiniteLossIsReported) {
  const auto spec = MlpSpec::bottleneck(2, 2, 2);
  Dataset data{2, 2, {1.0, 1.0}, {0}};
  const MlpTask task(spec, partition_model(spec.blocks(), {PartitionScheme::kShareAll, 0, {}}),
                     data);
  Vector p(spec.n_params(), 1.0);
  p[0] = NAN;
  const std::vector<std::size_t> batch = {0};
  EXPECT_THROW(task.loss_and_grads(p, Vector{}, batch), DivergenceError);
}

TEST(SyntheticDataTest, SameSeedIsBitIdentical) {
  const Dataset a = make_synthetic_dataset(200, 10, 3, 2.5, 77);
  const Dataset b = make_synthetic_dataset(200, 10, 3, 2.5, 77);
  const Dataset c = make_synthetic_dataset(200, 10, 3, 2.5, 78);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.inputs, c.inputs);
}

TEST(SyntheticDataTest, RejectsBadShapes) {
  EXPECT_THROW(make_synthetic_dataset(10, 3, 1, 1.0, 1), ValidationError);
  EXPECT_THROW(make_synthetic_dataset(10, 3, 4, 1.0, 1), ValidationError);
}

// Softmax regression trained by plain SGD as the reference classifier.
double LinearProbeAccuracy(const Dataset& train, const Dataset& test) {
  const std::size_t f = train.n_features, c = train.n_classes;
  Vector w(f * c, 0.0);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  for (int step = 0; step < 20000; ++step) {
    const std::size_t i = pick(rng);
    const auto x = train.row(i);
    Vector z(c, 0.0);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t j = 0; j < f; ++j) z[k] += w[k * f + j] * x[j];
    }
    Vector p = softmax(z);
    p[train.labels[i]] -= 1.0;
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t j = 0; j < f; ++j) w[k * f + j] -= 0.01 * p[k] * x[j];
    }
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto x = test.row(i);
    int best = 0;
    double best_z = -INFINITY;
    for (std::size_t k = 0; k < c; ++k) {
      double z = 0;
      for (std::size_t j = 0; j < f; ++j) z += w[k * f + j] * x[j];
      if (z > best_z) {
        best_z = z;
        best = static_cast<int>(k);
      }
    }
    if (best == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / test.size();
}

TEST(SyntheticDataTest, WellSeparatedClassesAreLinearlySeparable) {
  const Dataset all = make_synthetic_dataset(4000, 20, 2, 10.0, 8);
  EXPECT_GT(LinearProbeAccuracy(all.slice(0, 3000), all.slice(3000, 4000)), 0.99);
}

TEST(SyntheticDataTest, ZeroSeparationIsChance) {
  const Dataset all = make_synthetic_dataset(4000, 20, 2, 0.0, 8);
  EXPECT_NEAR(LinearProbeAccuracy(all.slice(0, 3000), all.slice(3000, 4000)), 0.5, 0.06);
}

class IdxTest : public ::testing::Test {
 protected:
  static void WriteBe32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }

  void Write(std::uint32_t image_magic, std::uint32_t n_images,
             std::size_t pixel_bytes, std::uint32_t n_labels) {
    std::ofstream img(images_, std::ios::binary);
    WriteBe32(img, image_magic);
    WriteBe32(img, n_images);
    WriteBe32(img, 2);
    WriteBe32(img, 2);
    for (std::size_t k = 0; k < pixel_bytes; ++k) img.put(static_cast<char>(k == 0 ? 255 : k));
    std::ofstream lab(labels_, std::ios::binary);
    WriteBe32(lab, 0x801);
    WriteBe32(lab, n_labels);
    for (std::uint32_t k = 0; k < n_labels; ++k) lab.put(static_cast<char>(k % 10));
  }

  void TearDown() override {
    std::filesystem::remove(images_);
    std::filesystem::remove(labels_);
  }

  std::string images_ = (std::filesystem::temp_directory_path() / "dpps_img.idx").string();
  std::string labels_ = (std::filesystem::temp_directory_path() / "dpps_lab.idx").string();
};

TEST_F(IdxTest, LoadsAndScales) {
  Write(0x803, 3, 12, 3);
  const Dataset d = load_mnist_idx(images_, labels_);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.n_features, 4u);
  EXPECT_EQ(d.inputs[0], 1.0);
  EXPECT_DOUBLE_EQ(d.inputs[5], 5.0 / 255.0);
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 2}));
}

TEST_F(IdxTest, TruncatedFileNamesByteCounts) {
  Write(0x803, 3, 10, 3);
  try {
    load_mnist_idx(images_, labels_);
    FAIL() << "expected an error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 28"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found 26"), std::string::npos) << msg;
  }
}

TEST_F(IdxTest, RejectsBadMagicAndCountMismatch) {
  Write(0x802, 3, 12, 3);
  EXPECT_THROW(load_mnist_idx(images_, labels_), ValidationError);
  Write(0x803, 3, 12, 2);
  EXPECT_THROW(load_mnist_idx(images_, labels_), ValidationError);
  EXPECT_THROW(load_mnist_idx(images_ + ".missing", labels_), ValidationError);
}

TEST(NodeShardTest, ShardsPartitionTheData) {
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < 7; ++i) {
    NodeShard shard(i, 7, 100, 1);
    for (std::size_t idx : shard.indices()) {
      EXPECT_EQ(idx % 7, i);
      EXPECT_TRUE(seen.insert(idx).second);
    }
  }
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_THROW(NodeShard(5, 10, 3, 1), ValidationError);
}

TEST(NodeShardTest, EpochsCoverShardOnceWithShortLastBatch) {
  NodeShard shard(1, 3, 50, 4);  // 17 examples
  EXPECT_EQ(shard.rounds_per_epoch(5), 4u);
  std::multiset<std::size_t> epoch0;
  std::vector<std::size_t> sizes;
  for (int r = 0; r < 4; ++r) {
    const auto b = shard.next_batch(5);
    sizes.push_back(b.size());
    epoch0.insert(b.begin(), b.end());
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{5, 5, 5, 2}));
  EXPECT_EQ(epoch0, std::multiset<std::size_t>(shard.indices().begin(), shard.indices().end()));
  EXPECT_EQ(shard.epoch(), 1u);
  const auto first = shard.next_batch(5);
  const auto perm = shard.epoch_permutation(1);
  EXPECT_EQ(first, std::vector<std::size_t>(perm.begin(), perm.begin() + 5));
  EXPECT_NE(shard.epoch_permutation(0), perm);
  EXPECT_EQ(NodeShard(1, 3, 50, 4).epoch_permutation(1), perm);
}

// One linear layer whose logit k is feature k.
class EvaluateTest : public ::testing::Test {
 protected:
  EvaluateTest()
      : spec_{{{2, 2}}},
        test_{2, 2, {1, 0, 2, 0.5, 0, 1, 0.3, 2}, {0, 0, 1, 1}},
        task_(spec_, partition_model(spec_.blocks(), {PartitionScheme::kShareAll, 0, {}}),
              test_) {}

  MlpSpec spec_;
  Dataset test_;
  MlpTask task_;
};

TEST_F(EvaluateTest, HandBuiltSeparatorIsPerfect) {
  std::vector<NodeState> nodes = {make_node_state(0, {1, 0, 0, 1}),
                                  make_node_state(1, {1, 0, 0, 1})};
  const auto acc = evaluate_network(std::span<const NodeState>(nodes), task_, test_);
  EXPECT_EQ(acc.final_acc, 1.0);
  EXPECT_EQ(acc.per_node, (std::vector<double>{1.0, 1.0}));
}

TEST_F(EvaluateTest, SingleNodeReportsItsOwnAccuracy) {
  std::vector<NodeState> nodes = {make_node_state(0, {0, 1, 1, 0})};
  const auto acc = evaluate_network(std::span<const NodeState>(nodes), task_, test_);
  EXPECT_EQ(acc.final_acc, acc.per_node[0]);
  EXPECT_EQ(acc.final_acc, task_.accuracy(nodes[0].shared, Vector{}, test_));
}

TEST_F(EvaluateTest, UsesTheAveragedSharedVector) {
  // Node 1 alone predicts a constant class; the mean is the separator scaled
  // by 1/2.
  std::vector<NodeState> nodes = {make_node_state(0, {2, 0, 0, 2}),
                                  make_node_state(1, {0, 0, 0, 0})};
  const auto acc = evaluate_network(std::span<const NodeState>(nodes), task_, test_);
  EXPECT_EQ(acc.final_acc, 1.0);
}

}  // namespace
}  // namespace dpps
