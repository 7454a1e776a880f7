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
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dpps/optimizer.hpp"
#include "dpps/partition.hpp"
#include "dpps/tasks/dataset.hpp"
#include "dpps/tasks/mlp.hpp"

namespace dpps {
namespace {

TEST(ClipTest, BelowThresholdUnchanged) {
  EXPECT_EQ(clip_gradient_l1(Vector{1, -1}, 4.0), (Vector{1, -1}));
}

TEST(ClipTest, AboveThresholdScaled) {
  const Vector c = clip_gradient_l1(Vector{3, -1}, 2.0);
  EXPECT_DOUBLE_EQ(c[0], 1.5);
  EXPECT_DOUBLE_EQ(c[1], -0.5);
}

TEST(ClipTest, ZeroVector) {
  EXPECT_EQ(clip_gradient_l1(Vector(4, 0.0), 0.5), Vector(4, 0.0));
}

TEST(ClipTest, RandomContract) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> threshold(0.1, 20.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Vector g(1 + trial % 37);
    const double spread = std::exp(normal(rng));
    for (double& x : g) x = spread * normal(rng);
    const double c = threshold(rng);
    const Vector out = clip_gradient_l1(g, c);
    EXPECT_LE(l1_norm(out), c + 1e-12);
    const double norm = l1_norm(g);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (norm <= c) {
        EXPECT_EQ(out[k], g[k]);
      } else {
        EXPECT_DOUBLE_EQ(out[k], g[k] * (c / norm));
      }
    }
  }
}

TEST(ClipTest, RejectsNonPositiveThreshold) {
  EXPECT_THROW(clip_gradient_l1(Vector{1}, 0.0), ValidationError);
}

TEST(LocalStepTest, Examples) {
  EXPECT_EQ(local_step(Vector{1, 1}, Vector{0, 0}, 0.3), (Vector{1, 1}));
  EXPECT_EQ(local_step(Vector{1, 1}, Vector{2, 0}, 0.5), (Vector{0, 1}));
}

TEST(LocalStepTest, MatchesElementwiseReference) {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> normal;
  Vector l(50), g(50);
  for (double& x : l) x = normal(rng);
  for (double& x : g) x = normal(rng);
  const Vector out = local_step(l, g, 0.37);
  for (std::size_t k = 0; k < l.size(); ++k) EXPECT_EQ(out[k], l[k] - 0.37 * g[k]);
}

std::vector<NamedBlock> ThreeLayers(std::size_t size) {
  return {{"layer0", size}, {"layer1", size}, {"layer2", size}};
}

TEST(PartitionTest, ShareFirstK) {
  const auto m = partition_model(ThreeLayers(7840), {PartitionScheme::kShareFirstK, 1, {}});
  EXPECT_EQ(m.shared_dim(), 7840u);
  EXPECT_EQ(m.local_dim(), 15680u);
  const auto two = partition_model(ThreeLayers(7840), {PartitionScheme::kShareFirstK, 2, {}});
  EXPECT_EQ(two.shared_dim(), 15680u);
}

TEST(PartitionTest, ShareAll) {
  const auto m = partition_model(ThreeLayers(7840), {PartitionScheme::kShareAll, 0, {}});
  EXPECT_EQ(m.shared_dim(), 23520u);
  EXPECT_EQ(m.local_dim(), 0u);
}

TEST(PartitionTest, CustomRoundTripIsExact) {
  const PartitionSpec spec{PartitionScheme::kCustom, 0,
                           {BlockRole::kLocal, BlockRole::kShared, BlockRole::kLocal}};
  const auto m = partition_model(ThreeLayers(7840), spec);
  EXPECT_EQ(m.shared_dim(), 7840u);
  EXPECT_EQ(m.local_dim(), 15680u);
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal;
  Vector full(m.total_dim());
  for (double& x : full) x = normal(rng);
  const auto [s, l] = m.split(full);
  EXPECT_EQ(s[0], full[7840]);
  EXPECT_EQ(l[7840], full[15680]);
  EXPECT_EQ(m.join(s, l), full);
}

TEST(PartitionTest, RejectsBadSpecs) {
  EXPECT_THROW(partition_model(ThreeLayers(4), {PartitionScheme::kShareFirstK, 0, {}}),
               ValidationError);
  EXPECT_THROW(partition_model(ThreeLayers(4), {PartitionScheme::kShareFirstK, 4, {}}),
               ValidationError);
  EXPECT_THROW(partition_model(ThreeLayers(4),
                               {PartitionScheme::kCustom, 0,
                                {BlockRole::kLocal, BlockRole::kLocal, BlockRole::kLocal}}),
               ValidationError);
  EXPECT_THROW(partition_model(ThreeLayers(4),
                               {PartitionScheme::kCustom, 0, {BlockRole::kShared}}),
               ValidationError);
}

class PartPspTest : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = make_synthetic_dataset(300, 6, 3, 3.0, 31);
    spec_ = MlpSpec::bottleneck(6, 3, 3);
  }

  MlpTask Task(std::size_t k) const {
    return MlpTask(spec_, partition_model(spec_.blocks(), {PartitionScheme::kShareFirstK, k, {}}),
                   data_);
  }

  Dataset data_;
  MlpSpec spec_;
};

// With one node and a self-loop the round must reduce to plain SGD with an
// L1-clipped step on the shared block.
TEST_F(PartPspTest, SingleNodeMatchesSequentialSgd) {
  const MlpTask task = Task(1);
  const auto& model = task.partition();
  Engine init = make_stream(1, 0, StreamKind::kInit);
  const Vector start = init_mlp_params(spec_, init);
  auto [s0, l0] = model.split(start);
  std::vector<NodeState> nodes = {make_node_state(0, s0, l0)};
  std::vector<NodeShard> shards = {NodeShard(0, 1, data_.size(), 5)};
  std::vector<Engine> noise = {make_stream(5, 0, StreamKind::kNoise)};
  const auto w = weight_matrix(GraphSchedule::custom(1, {{}}), 0);
  OptimizerConfig cfg;
  cfg.gamma_l = 0.1;
  cfg.gamma_s = 0.2;
  cfg.clip_threshold = 0.5;
  cfg.batch_size = 16;
  cfg.sync_interval = 3;
  ProtocolParams protocol;
  protocol.noise_enabled = false;

  Vector s = s0, l = l0;
  NodeShard ref_shard(0, 1, data_.size(), 5);
  for (std::uint64_t t = 0; t < 40; ++t) {
    const auto out = partpsp_round(std::span<NodeState>(nodes), task,
                                   std::span<NodeShard>(shards), w, cfg, protocol,
                                   std::span<Engine>(noise), t);
    const auto batch = ref_shard.next_batch(cfg.batch_size);
    auto g1 = mlp_loss_and_grad(spec_, model.join(s, l), data_, batch);
    const auto [g1s, g1l] = model.split(g1.grad);
    for (std::size_t k = 0; k < l.size(); ++k) l[k] -= cfg.gamma_l * g1l[k];
    auto g2 = mlp_loss_and_grad(spec_, model.join(s, l), data_, batch);
    const auto [g2s, g2l] = model.split(g2.grad);
    const double norm = l1_norm(g2s);
    const double factor = norm > cfg.clip_threshold ? cfg.clip_threshold / norm : 1.0;
    for (std::size_t k = 0; k < s.size(); ++k) s[k] -= cfg.gamma_s * g2s[k] * factor;

    EXPECT_NEAR(out.loss_mean, g2.loss, 1e-12);
    for (std::size_t k = 0; k < s.size(); ++k) EXPECT_NEAR(nodes[0].shared[k], s[k], 1e-12);
    for (std::size_t k = 0; k < l.size(); ++k) EXPECT_NEAR(nodes[0].local[k], l[k], 1e-12);
    EXPECT_LE(out.protocol.perturbation_l1[0], cfg.gamma_s * cfg.clip_threshold + 1e-12);
    EXPECT_EQ(out.synced, (t + 1) % 3 == 0);
  }
}

TEST_F(PartPspTest, ZeroSharedStepKeepsIdenticalInitFixed) {
  const MlpTask task = Task(2);
  Engine init = make_stream(2, kSharedStream, StreamKind::kInit);
  auto [s0, l0] = task.partition().split(init_mlp_params(spec_, init));
  const std::size_t n = 4;
  std::vector<NodeState> nodes;
  std::vector<NodeShard> shards;
  std::vector<Engine> noise;
  for (std::size_t i = 0; i < n; ++i) {
    nodes.push_back(make_node_state(i, s0, l0));
    shards.emplace_back(i, n, data_.size(), 3);
    noise.push_back(make_stream(3, i, StreamKind::kNoise));
  }
  const auto g = GraphSchedule::exp(n);
  OptimizerConfig cfg;
  cfg.gamma_s = 0.0;
  ProtocolParams protocol;
  protocol.noise_enabled = false;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto out = partpsp_round(std::span<NodeState>(nodes), task,
                                   std::span<NodeShard>(shards), weight_matrix(g, t),
                                   cfg, protocol, std::span<Engine>(noise), t);
    EXPECT_EQ(out.protocol.real_sensitivity, 0.0);
  }
  for (const auto& node : nodes) EXPECT_EQ(node.shared, s0);
}

TEST_F(PartPspTest, ProbeReportsDeltas) {
  const MlpTask task = Task(1);
  const std::size_t n = 3;
  std::vector<NodeState> nodes;
  std::vector<NodeShard> shards;
  std::vector<Engine> noise;
  std::vector<std::vector<std::size_t>> eval;
  for (std::size_t i = 0; i < n; ++i) {
    Engine init = make_stream(4, i, StreamKind::kInit);
    auto [s, l] = task.partition().split(init_mlp_params(spec_, init));
    nodes.push_back(make_node_state(i, s, l));
    shards.emplace_back(i, n, data_.size(), 4);
    noise.push_back(make_stream(4, i, StreamKind::kNoise));
    eval.push_back(shards.back().indices());
  }
  // Oracle values computed before the round mutates the states.
  double delta_l = 0.0, objective = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = task.loss_and_grads(nodes[i].corrected, nodes[i].local, eval[i]);
    delta_l += squared_l2_norm(g.local) / n;
    objective += g.loss / n;
  }
  OptimizerConfig cfg;
  ProtocolParams protocol;
  const auto out = partpsp_round(std::span<NodeState>(nodes), task,
                                 std::span<NodeShard>(shards),
                                 weight_matrix(GraphSchedule::exp(n), 0), cfg, protocol,
                                 std::span<Engine>(noise), 0,
                                 DeltaProbe{std::span<const std::vector<std::size_t>>(eval)});
  ASSERT_TRUE(out.delta_l && out.delta_sbar && out.objective);
  EXPECT_NEAR(*out.delta_l, delta_l, 1e-12);
  EXPECT_NEAR(*out.objective, objective, 1e-12);
  EXPECT_GT(*out.delta_sbar, 0.0);
}

TEST(OptimizerConfigTest, Validation) {
  OptimizerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma_l = -1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = OptimizerConfig{};
  c.clip_threshold = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = OptimizerConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

}  // namespace
}  // namespace dpps
