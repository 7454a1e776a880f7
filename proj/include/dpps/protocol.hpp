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

#ifndef DPPS_PROTOCOL_HPP_
#define DPPS_PROTOCOL_HPP_

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpps/error.hpp"
#include "dpps/privacy.hpp"
#include "dpps/rng.hpp"
#include "dpps/topology.hpp"
#include "dpps/vector_ops.hpp"

namespace dpps {

struct NodeState {
  std::size_t node_id = 0;
  Vector shared;     // s_i
  Vector corrected;  // y_i = s_i / a_i
  double norm_scalar = 1.0;  // a_i
  Vector local;      // l_i, never communicated

  // Empty until the node has run a round since start-up or the last
  // synchronization; the next round then initializes it from
  // `estimate_baseline_l1` and that round's perturbation.
  std::optional<SensitivityEstimate> estimate;
  double estimate_baseline_l1 = 0.0;
};

inline NodeState make_node_state(std::size_t node_id, Vector shared,
                                 Vector local = {}) {
  NodeState s;
  s.node_id = node_id;
  s.estimate_baseline_l1 = l1_norm(shared);
  s.corrected = shared;
  s.shared = std::move(shared);
  s.local = std::move(local);
  return s;
}

// Which value scales the Laplace noise. kEstimate is the protocol as
// designed; kReal uses the brute-force pairwise maximum, which only a
// simulator can compute, for accuracy experiments that must not depend on
// the fitted constants.
enum class SensitivitySource { kEstimate, kReal };

struct ProtocolParams {
  EstimatorConstants constants;
  double b = 5.0;
  double gamma_n = 0.01;
  bool noise_enabled = true;
  SensitivitySource source = SensitivitySource::kEstimate;
};

struct RoundOutcome {
  double sensitivity_used = 0.0;  // S^(t) that scaled the noise
  double esti_sensitivity = 0.0;  // max_i S_i^(t)
  double real_sensitivity = 0.0;  // max_ij ||s_i - s_j||_1 before noise
  std::vector<NoiseDraw> noise_draws;
  std::vector<double> perturbation_l1;
};

// Instrumentation points. `after_noise` sees the outgoing (noised) messages
// once every node has finished adding noise and before any node aggregates;
// it may overwrite them. `after_round` sees the final post-round states.
struct RoundHooks {
  std::function<void(std::span<Vector> outgoing)> after_noise;
  std::function<void(std::span<const NodeState> states)> after_round;
};

inline double perturbation_mean_l1(const RoundOutcome& r) {
  double sum = 0.0;
  for (double x : r.perturbation_l1) sum += x;
  return r.perturbation_l1.empty() ? 0.0 : sum / r.perturbation_l1.size();
}

inline double noise_mean_l1(const RoundOutcome& r) {
  double sum = 0.0;
  for (const auto& n : r.noise_draws) sum += n.l1_norm;
  return r.noise_draws.empty() ? 0.0 : sum / r.noise_draws.size();
}

// One round of differentially private perturbed push-sum. Phases run to
// completion for every node before the next phase starts:
//   1. s_i += eps_i
//   2. update S_i, S = max_i S_i
//   3. n_i ~ Lap(0, S / b)^d, outgoing_i = s_i + gamma_n n_i
//   4. s_i = sum_j w_ij outgoing_j, a_i = sum_j w_ij a_j
//   5. y_i = s_i / a_i
// `noise_streams[i]` belongs to node i.
inline RoundOutcome dpps_round(std::span<NodeState> states,
                               const WeightMatrix& w,
                               std::span<const Vector> perturbations,
                               const ProtocolParams& params,
                               std::span<Engine> noise_streams,
                               const RoundHooks& hooks = {}) {
  const std::size_t n = states.size();
  if (n == 0) throw ValidationError("dpps_round: no nodes");
  require_same_size(w.size(), n, "dpps_round weight matrix");
  require_same_size(perturbations.size(), n, "dpps_round perturbations");
  require_same_size(noise_streams.size(), n, "dpps_round noise streams");
  const std::size_t dim = states[0].shared.size();

  RoundOutcome out;
  out.perturbation_l1.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    require_same_size(states[i].shared.size(), dim, "dpps_round shared vector");
    require_same_size(perturbations[i].size(), dim, "dpps_round perturbation");
    for (std::size_t k = 0; k < dim; ++k) {
      states[i].shared[k] += perturbations[i][k];
    }
    out.perturbation_l1[i] = l1_norm(perturbations[i]);
  }

  for (std::size_t i = 0; i < n; ++i) {
    NodeState& s = states[i];
    if (!s.estimate) {
      s.estimate = init_estimate(s.estimate_baseline_l1, out.perturbation_l1[i],
                                 params.constants.c_prime,
                                 params.constants.lambda);
    } else {
      s.estimate = update_estimate(*s.estimate, out.perturbation_l1[i],
                                   s.estimate->last_noise_l1, params.gamma_n);
    }
    out.esti_sensitivity = std::max(out.esti_sensitivity, s.estimate->value);
  }
  {
    std::vector<Vector> half_step(n);
    for (std::size_t i = 0; i < n; ++i) half_step[i] = states[i].shared;
    out.real_sensitivity = real_sensitivity(half_step);
  }
  out.sensitivity_used = params.source == SensitivitySource::kEstimate
                             ? out.esti_sensitivity
                             : out.real_sensitivity;

  std::vector<Vector> outgoing(n);
  out.noise_draws.reserve(n);
  const bool add_noise = params.noise_enabled && out.sensitivity_used > 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    NoiseDraw draw =
        add_noise
            ? sample_laplace(out.sensitivity_used / params.b, dim,
                             noise_streams[i])
            : zero_noise(dim);
    outgoing[i] = states[i].shared;
    if (add_noise) {
      for (std::size_t k = 0; k < dim; ++k) {
        outgoing[i][k] += params.gamma_n * draw.vector[k];
      }
    }
    states[i].estimate->last_noise_l1 = draw.l1_norm;
    out.noise_draws.push_back(std::move(draw));
  }
  if (hooks.after_noise) hooks.after_noise(outgoing);

  std::vector<double> old_scalars(n);
  for (std::size_t i = 0; i < n; ++i) old_scalars[i] = states[i].norm_scalar;
  for (std::size_t i = 0; i < n; ++i) {
    Vector mixed(dim, 0.0);
    double a = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double wij = w.at(i, j);
      if (wij == 0.0) continue;
      for (std::size_t k = 0; k < dim; ++k) mixed[k] += wij * outgoing[j][k];
      a += wij * old_scalars[j];
    }
    if (!(a > 0.0)) {
      throw InvariantViolation("dpps_round: normalizing scalar of node " +
                               std::to_string(i) + " is " + std::to_string(a));
    }
    states[i].shared = std::move(mixed);
    states[i].norm_scalar = a;
  }

  for (auto& s : states) {
    s.corrected.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      s.corrected[k] = s.shared[k] / s.norm_scalar;
    }
  }
  if (hooks.after_round) hooks.after_round(states);
  return out;
}

// (1/N) sum_i s_i
inline Vector network_mean(std::span<const NodeState> states) {
  if (states.empty()) throw ValidationError("network_mean: no nodes");
  Vector mean(states[0].shared.size(), 0.0);
  for (const auto& s : states) {
    require_same_size(s.shared.size(), mean.size(), "network_mean");
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += s.shared[k];
  }
  const double inv = 1.0 / static_cast<double>(states.size());
  for (double& x : mean) x *= inv;
  return mean;
}

enum class SyncResetMode {
  kZeroed,        // estimator restarts from zero deviation
  kConservative,  // estimator restarts from ||synced vector||_1
};

// Exact all-reduce of the (already noised) shared vectors. Afterwards every
// node holds the network mean, a = 1, and its estimator restarts.
inline void synchronize(std::span<NodeState> states, SyncResetMode mode) {
  const Vector mean = network_mean(states);
  const double baseline =
      mode == SyncResetMode::kZeroed ? 0.0 : l1_norm(mean);
  for (auto& s : states) {
    s.shared = mean;
    s.corrected = mean;
    s.norm_scalar = 1.0;
    s.estimate.reset();
    s.estimate_baseline_l1 = baseline;
  }
}

}  // namespace dpps

#endif  // DPPS_PROTOCOL_HPP_
