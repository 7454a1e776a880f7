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

#ifndef DPPS_OPTIMIZER_HPP_
#define DPPS_OPTIMIZER_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpps/error.hpp"
#include "dpps/protocol.hpp"
#include "dpps/tasks/dataset.hpp"
#include "dpps/tasks/mlp.hpp"
#include "dpps/topology.hpp"
#include "dpps/vector_ops.hpp"

namespace dpps {

// g / max(1, ||g||_1 / threshold). Identity below the threshold.
inline Vector clip_gradient_l1(std::span<const double> g, double threshold) {
  if (!(threshold > 0.0)) {
    throw ValidationError("clip threshold must be positive");
  }
  Vector out(g.begin(), g.end());
  const double norm = l1_norm(g);
  if (norm > threshold) {
    const double factor = threshold / norm;
    for (double& x : out) x *= factor;
  }
  return out;
}

// local - gamma_l * g_l. Local gradients are never clipped.
inline Vector local_step(std::span<const double> local,
                         std::span<const double> g_l, double gamma_l) {
  require_same_size(local.size(), g_l.size(), "local_step");
  Vector out(local.size());
  for (std::size_t k = 0; k < local.size(); ++k) {
    out[k] = local[k] - gamma_l * g_l[k];
  }
  return out;
}

struct OptimizerConfig {
  double gamma_l = 0.05;
  double gamma_s = 0.05;
  double clip_threshold = 10.0;
  std::uint64_t rounds = 200;
  std::uint64_t sync_interval = 5;  // 0 = never
  SyncResetMode sync_mode = SyncResetMode::kZeroed;
  std::size_t batch_size = 32;

  void validate() const {
    if (!(gamma_l > 0.0)) throw ValidationError("optimizer.gamma_l must be > 0");
    if (!(gamma_s >= 0.0)) throw ValidationError("optimizer.gamma_s must be >= 0");
    if (!(clip_threshold > 0.0)) {
      throw ValidationError("optimizer.clip_threshold must be > 0");
    }
    if (rounds == 0) throw ValidationError("optimizer.rounds must be > 0");
    if (batch_size == 0) throw ValidationError("optimizer.batch_size must be > 0");
  }
};

struct PartPspRound {
  RoundOutcome protocol;
  std::vector<Vector> perturbations;  // eps_i = -gamma_s * clipped g_s
  double loss_mean = 0.0;
  std::optional<double> objective;  // (1/N) sum_i F_i(y_i, l_i) on the probe
  std::optional<double> delta_l;
  std::optional<double> delta_sbar;
  bool synced = false;
};

// Optional per-round evaluation of the optimality measures on fixed batches:
//   delta_l    = (1/N) sum_i ||grad_l F_i(y_i, l_i)||^2       (before the step)
//   delta_sbar = ||(1/N) sum_i grad_s F_i(s_bar, l_i')||^2   (l after the step)
struct DeltaProbe {
  std::span<const std::vector<std::size_t>> eval_batches;  // one per node
};

// One PartPSP iteration over all nodes followed, when due, by a
// synchronization. Round index t selects the sync schedule.
template <PartitionedObjective Task>
PartPspRound partpsp_round(std::span<NodeState> nodes, const Task& task,
                           std::span<NodeShard> shards, const WeightMatrix& w,
                           const OptimizerConfig& cfg,
                           const ProtocolParams& protocol,
                           std::span<Engine> noise_streams, std::uint64_t t,
                           const std::optional<DeltaProbe>& probe = std::nullopt,
                           const RoundHooks& hooks = {}) {
  const std::size_t n = nodes.size();
  require_same_size(shards.size(), n, "partpsp_round shards");
  const PartitionedModel& model = task.partition();

  PartPspRound out;
  const Vector mean_before = probe ? network_mean(nodes) : Vector{};
  if (probe) {
    require_same_size(probe->eval_batches.size(), n, "partpsp_round eval batches");
    double acc = 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = task.loss_and_grads(nodes[i].corrected, nodes[i].local,
                                         probe->eval_batches[i]);
      acc += squared_l2_norm(g.local);
      loss += g.loss;
    }
    out.delta_l = acc / static_cast<double>(n);
    out.objective = loss / static_cast<double>(n);
  }

  out.perturbations.resize(n);
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    NodeState& node = nodes[i];
    const std::vector<std::size_t> batch = shards[i].next_batch(cfg.batch_size);
    if (model.local_dim() > 0) {
      const auto g = task.loss_and_grads(node.corrected, node.local, batch);
      node.local = local_step(node.local, g.local, cfg.gamma_l);
    }
    const auto g = task.loss_and_grads(node.corrected, node.local, batch);
    loss_sum += g.loss;
    Vector eps = clip_gradient_l1(g.shared, cfg.clip_threshold);
    for (double& x : eps) x *= -cfg.gamma_s;
    out.perturbations[i] = std::move(eps);
  }
  out.loss_mean = loss_sum / static_cast<double>(n);

  if (probe) {
    Vector grad_mean(model.shared_dim(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto g =
          task.loss_and_grads(mean_before, nodes[i].local, probe->eval_batches[i]);
      for (std::size_t k = 0; k < grad_mean.size(); ++k) grad_mean[k] += g.shared[k];
    }
    for (double& x : grad_mean) x /= static_cast<double>(n);
    out.delta_sbar = squared_l2_norm(grad_mean);
  }

  out.protocol =
      dpps_round(nodes, w, out.perturbations, protocol, noise_streams, hooks);

  if (cfg.sync_interval > 0 && (t + 1) % cfg.sync_interval == 0) {
    synchronize(nodes, cfg.sync_mode);
    out.synced = true;
  }
  return out;
}

}  // namespace dpps

#endif  // DPPS_OPTIMIZER_HPP_
