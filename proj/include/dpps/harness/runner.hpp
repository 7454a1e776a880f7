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

#ifndef DPPS_HARNESS_RUNNER_HPP_
#define DPPS_HARNESS_RUNNER_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpps/error.hpp"
#include "dpps/harness/config.hpp"
#include "dpps/harness/metrics.hpp"
#include "dpps/optimizer.hpp"
#include "dpps/partition.hpp"
#include "dpps/privacy.hpp"
#include "dpps/protocol.hpp"
#include "dpps/rng.hpp"
#include "dpps/tasks/dataset.hpp"
#include "dpps/tasks/evaluate.hpp"
#include "dpps/tasks/mlp.hpp"
#include "dpps/topology.hpp"

namespace dpps {

inline GraphSchedule make_schedule(const TopologyConfig& t) {
  switch (t.kind) {
    case TopologyKind::kDOut:
      return GraphSchedule::d_out(t.n_nodes, t.d);
    case TopologyKind::kExp:
      return GraphSchedule::exp(t.n_nodes);
    case TopologyKind::kCustom:
      return GraphSchedule::custom_from_file(t.n_nodes, t.rounds_file);
  }
  throw ValidationError("unknown topology kind");
}

inline ProtocolParams make_protocol_params(const ExperimentConfig& c) {
  ProtocolParams p;
  p.constants = {c.privacy.c_prime, c.privacy.lambda};
  p.b = c.privacy.b;
  p.gamma_n = c.privacy.gamma_n;
  p.noise_enabled = c.privacy.enabled;
  p.source = c.protocol.sensitivity_source;
  return p;
}

// The whole network for one experiment: data, model, graph and node states.
// Rounds are advanced one at a time with step(); every step appends one
// RoundMetrics row.
class Simulation {
 public:
  explicit Simulation(ExperimentConfig config, bool test_mode = false)
      : cfg_(std::move(config)), test_mode_(test_mode) {
    validate_config(cfg_);
    load_data();
    task_.emplace(spec_, partition_model(spec_.blocks(), cfg_.partition), *train_);
    schedule_.emplace(make_schedule(cfg_.topology));
    for (std::size_t t = 0; t < schedule_->period(); ++t) {
      weights_.push_back(weight_matrix(*schedule_, t));
    }
    params_ = make_protocol_params(cfg_);
    opt_.gamma_l = cfg_.optimizer.gamma_l;
    opt_.gamma_s = cfg_.optimizer.gamma_s;
    opt_.clip_threshold = cfg_.optimizer.clip_threshold;
    opt_.sync_interval = cfg_.protocol.sync_interval;
    opt_.sync_mode = cfg_.protocol.sync_reset_mode;
    opt_.batch_size = cfg_.optimizer.batch_size;

    const std::size_t n = cfg_.topology.n_nodes;
    const auto& model = task_->partition();
    std::size_t rounds_per_epoch = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Engine init = make_stream(cfg_.master_seed,
                                cfg_.task.identical_init ? kSharedStream : i,
                                StreamKind::kInit);
      auto [s, l] = model.split(init_mlp_params(spec_, init));
      nodes_.push_back(make_node_state(i, std::move(s), std::move(l)));
      shards_.emplace_back(i, n, train_->size(), cfg_.master_seed);
      noise_.push_back(make_stream(cfg_.master_seed, i, StreamKind::kNoise));
      const auto& idx = shards_.back().indices();
      eval_batches_.emplace_back(
          idx.begin(),
          idx.begin() + (cfg_.optimizer.eval_batch_size == 0
                             ? idx.size()
                             : std::min(idx.size(), cfg_.optimizer.eval_batch_size)));
      rounds_per_epoch =
          std::max(rounds_per_epoch,
                   shards_.back().rounds_per_epoch(cfg_.optimizer.batch_size));
    }
    total_rounds_ = cfg_.optimizer.epochs > 0
                        ? cfg_.optimizer.epochs * rounds_per_epoch
                        : cfg_.optimizer.rounds;
    epsilon_ = cfg_.privacy.enabled ? cfg_.privacy.b / cfg_.privacy.gamma_n
                                    : std::numeric_limits<double>::infinity();
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const ExperimentConfig& config() const { return cfg_; }
  const MlpTask& task() const { return *task_; }
  const GraphSchedule& schedule() const { return *schedule_; }
  const ProtocolParams& protocol_params() const { return params_; }
  std::span<const NodeState> nodes() const { return nodes_; }
  std::uint64_t round() const { return t_; }
  std::uint64_t total_rounds() const { return total_rounds_; }
  bool done() const { return t_ >= total_rounds_; }
  const std::vector<RoundMetrics>& metrics() const { return metrics_; }
  const WeightMatrix& weights(std::uint64_t t) const {
    return weights_[t % weights_.size()];
  }
  const Dataset& test_set() const { return *test_; }

  PartPspRound step(const RoundHooks& hooks = {}) {
    const std::uint64_t t = t_;
    const auto interval = cfg_.optimizer.metrics_interval;
    std::optional<DeltaProbe> probe;
    if (interval > 0 && (t % interval == 0 || t + 1 == total_rounds_)) {
      probe = DeltaProbe{eval_batches_};
    }
    PartPspRound r;
    try {
      r = partpsp_round(std::span<NodeState>(nodes_), *task_,
                        std::span<NodeShard>(shards_), weights(t), opt_, params_,
                        std::span<Engine>(noise_), t, probe, hooks);
    } catch (const DivergenceError& e) {
      throw DivergenceError("round " + std::to_string(t) + ": " + e.what());
    }

    RoundMetrics m;
    m.round = t;
    m.esti_sensitivity = r.protocol.esti_sensitivity;
    m.real_sensitivity = r.protocol.real_sensitivity;
    m.mean_eps_l1 = perturbation_mean_l1(r.protocol);
    m.mean_noise_l1 = noise_mean_l1(r.protocol);
    m.synced = r.synced;
    m.loss_mean = r.loss_mean;
    m.objective = r.objective;
    m.delta_l = r.delta_l;
    m.delta_sbar = r.delta_sbar;
    real_sum_ += m.real_sensitivity;
    m.ras_running = real_sum_ / static_cast<double>(t + 1);
    m.epsilon_per_round = epsilon_;
    metrics_.push_back(m);
    ++t_;

    if (test_mode_ && t > 0 && params_.source == SensitivitySource::kEstimate &&
        m.real_sensitivity > m.esti_sensitivity) {
      throw InvariantViolation(
          "real sensitivity exceeds estimate at round " + std::to_string(t) +
          ": real=" + internal::g17(m.real_sensitivity) +
          " esti=" + internal::g17(m.esti_sensitivity) +
          " (c_prime=" + internal::g17(params_.constants.c_prime) +
          ", lambda=" + internal::g17(params_.constants.lambda) + ")");
    }
    return r;
  }

  NetworkAccuracy evaluate() const {
    return evaluate_network(std::span<const NodeState>(nodes_), *task_, *test_);
  }

  RunSummary summary() const {
    RunSummary s;
    s.total_rounds = t_;
    s.epsilon_per_round = epsilon_;
    s.c_prime = params_.constants.c_prime;
    s.lambda = params_.constants.lambda;
    for (const auto& m : metrics_) {
      s.peak_sensitivity = std::max(s.peak_sensitivity, m.real_sensitivity);
      s.peak_esti_sensitivity = std::max(s.peak_esti_sensitivity, m.esti_sensitivity);
    }
    if (!metrics_.empty()) {
      s.ras = real_sum_ / static_cast<double>(metrics_.size());
      s.final_loss = metrics_.back().loss_mean;
    }
    return s;
  }

 private:
  void load_data() {
    const auto& t = cfg_.task;
    if (t.kind == TaskKind::kSynthetic) {
      const Dataset all = make_synthetic_dataset(
          t.n_examples + t.n_test, t.n_features, t.n_classes, t.separation,
          cfg_.master_seed);
      train_ = std::make_unique<Dataset>(all.slice(0, t.n_examples));
      test_ = std::make_unique<Dataset>(all.slice(t.n_examples, all.size()));
    } else {
      train_ = std::make_unique<Dataset>(load_mnist_idx(t.train_images, t.train_labels));
      test_ = std::make_unique<Dataset>(load_mnist_idx(t.test_images, t.test_labels));
    }
    spec_ = MlpSpec::bottleneck(train_->n_features, t.hidden, train_->n_classes);
  }

  ExperimentConfig cfg_;
  bool test_mode_;
  std::unique_ptr<Dataset> train_;
  std::unique_ptr<Dataset> test_;
  MlpSpec spec_;
  std::optional<MlpTask> task_;
  std::optional<GraphSchedule> schedule_;
  std::vector<WeightMatrix> weights_;
  ProtocolParams params_;
  OptimizerConfig opt_;
  std::vector<NodeState> nodes_;
  std::vector<NodeShard> shards_;
  std::vector<Engine> noise_;
  std::vector<std::vector<std::size_t>> eval_batches_;
  std::uint64_t t_ = 0;
  std::uint64_t total_rounds_ = 0;
  double epsilon_ = 0.0;
  double real_sum_ = 0.0;
  std::vector<RoundMetrics> metrics_;
};

struct RunOptions {
  bool test_mode = false;
  bool write_files = true;
};

struct RunResult {
  RunSummary summary;
  std::vector<RoundMetrics> metrics;
  NetworkAccuracy accuracy;
};

// Runs all rounds, evaluates the averaged model, and (optionally) writes
// metrics.csv, summary.json and the resolved config.toml to output_dir.
inline RunResult run_experiment(const ExperimentConfig& config,
                                const RunOptions& options = {}) {
  const auto start = std::chrono::steady_clock::now();
  Simulation sim(config, options.test_mode);
  while (!sim.done()) sim.step();
  RunResult result;
  result.accuracy = sim.evaluate();
  result.summary = sim.summary();
  result.summary.final_acc = result.accuracy.final_acc;
  result.summary.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.metrics = sim.metrics();
  if (options.write_files) {
    const std::filesystem::path dir = config.output_dir;
    emit_metrics(result.metrics, dir / "metrics.csv");
    write_summary(result.summary, dir / "summary.json");
    auto out = internal::open_for_write(dir / "config.toml");
    out << serialize_config(config);
  }
  return result;
}

enum class SweepAxis { kSharedLayers, kOutDegree, kNodes };

inline SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "shared_layers") return SweepAxis::kSharedLayers;
  if (name == "out_degree") return SweepAxis::kOutDegree;
  if (name == "n_nodes") return SweepAxis::kNodes;
  throw ValidationError("unknown sweep axis '" + name +
                        "' (expected shared_layers|out_degree|n_nodes)");
}

inline ExperimentConfig apply_sweep_value(ExperimentConfig c, SweepAxis axis,
                                          std::size_t value) {
  switch (axis) {
    case SweepAxis::kSharedLayers:
      c.partition.scheme = PartitionScheme::kShareFirstK;
      c.partition.k = value;
      break;
    case SweepAxis::kOutDegree:
      c.topology.kind = TopologyKind::kDOut;
      c.topology.d = value;
      break;
    case SweepAxis::kNodes:
      c.topology.n_nodes = value;
      break;
  }
  return c;
}

// One run per value with the base seed; writes sweep.csv when requested.
inline std::vector<SweepRow> run_sensitivity_sweep(
    const ExperimentConfig& base, SweepAxis axis,
    const std::vector<std::size_t>& values, bool write_files = true) {
  std::vector<SweepRow> rows;
  for (std::size_t v : values) {
    try {
      RunOptions opts;
      opts.write_files = false;
      const RunResult r = run_experiment(apply_sweep_value(base, axis, v), opts);
      rows.push_back({static_cast<double>(v), r.summary.ras,
                      r.summary.peak_sensitivity});
    } catch (const ValidationError& e) {
      throw ValidationError("sweep value " + std::to_string(v) + ": " + e.what());
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("sweep value " + std::to_string(v) + ": " + e.what());
    }
  }
  if (write_files) {
    emit_sweep(rows, std::filesystem::path(base.output_dir) / "sweep.csv");
  }
  return rows;
}

struct CalibrationResult {
  double c_prime = 0.0;
  double lambda = 0.0;
  double headroom = 0.0;
  std::uint64_t rounds = 0;
  double max_target = 0.0;
};

// Noiseless trace from which (C', lambda) are fitted.
struct CalibrationTrace {
  struct Round {
    std::vector<bool> restart;       // node initializes its estimator
    std::vector<double> baseline_l1;  // ||s_0||_1 used on restart
    std::vector<double> eps_l1;
    double target = 0.0;
  };
  std::vector<Round> rounds;
};

inline CalibrationTrace record_calibration_trace(const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  cfg.privacy.enabled = false;
  cfg.optimizer.metrics_interval = 0;
  Simulation sim(cfg);
  CalibrationTrace trace;
  while (!sim.done()) {
    CalibrationTrace::Round r;
    const Vector mean_before = network_mean(sim.nodes());
    for (const auto& node : sim.nodes()) {
      r.restart.push_back(!node.estimate.has_value());
      r.baseline_l1.push_back(node.estimate_baseline_l1);
    }
    double y_bound = 0.0;
    RoundHooks hooks;
    hooks.after_round = [&](std::span<const NodeState> states) {
      for (const auto& s : states) {
        y_bound = std::max(y_bound, 2.0 * l1_distance(s.corrected, mean_before));
      }
    };
    const PartPspRound out = sim.step(hooks);
    r.eps_l1 = out.protocol.perturbation_l1;
    r.target = std::max(out.protocol.real_sensitivity, y_bound);
    trace.rounds.push_back(std::move(r));
  }
  return trace;
}

// For each lambda on a 0.01 grid the smallest admissible C' follows in closed
// form, because the noiseless estimate is linear in C'. The pair with the
// smallest summed estimate over the trace wins.
inline CalibrationResult fit_estimator_constants(const CalibrationTrace& trace,
                                                 double headroom) {
  if (!(headroom >= 0.0)) throw ValidationError("headroom must be >= 0");
  if (trace.rounds.empty()) throw ValidationError("empty calibration trace");
  CalibrationResult best;
  best.headroom = headroom;
  best.rounds = trace.rounds.size();
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& r : trace.rounds) best.max_target = std::max(best.max_target, r.target);
  if (best.max_target == 0.0) {
    throw ValidationError(
        "calibration trace has zero sensitivity in every round; nothing to fit");
  }
  for (int step = 1; step <= 99; ++step) {
    const double lambda = step / 100.0;
    const std::size_t n = trace.rounds.front().eps_l1.size();
    std::vector<double> unit(n, 0.0);
    double c_needed = 0.0;
    double unit_sum = 0.0;
    bool feasible = true;
    for (const auto& r : trace.rounds) {
      double s_unit = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        unit[i] = r.restart[i] ? 2.0 * (r.baseline_l1[i] + r.eps_l1[i])
                               : lambda * unit[i] + 2.0 * r.eps_l1[i];
        s_unit = std::max(s_unit, unit[i]);
      }
      unit_sum += s_unit;
      if (r.target > 0.0) {
        if (s_unit == 0.0) {
          feasible = false;
          break;
        }
        c_needed = std::max(c_needed, (1.0 + headroom) * r.target / s_unit);
      }
    }
    if (!feasible) continue;
    const double cost = c_needed * unit_sum;
    if (cost < best_cost) {
      best_cost = cost;
      best.c_prime = c_needed;
      best.lambda = lambda;
    }
  }
  if (!std::isfinite(best_cost)) {
    throw ValidationError("no lambda in (0, 1) admits a finite C'");
  }
  return best;
}

inline CalibrationResult calibrate(const ExperimentConfig& base, double headroom) {
  return fit_estimator_constants(record_calibration_trace(base), headroom);
}

struct InvariantCheck {
  std::string name;
  bool passed = true;
  double worst = 0.0;  // largest observed violation measure
  double tolerance = 0.0;
};

struct InvariantReport {
  std::vector<InvariantCheck> checks;
  std::uint64_t rounds = 0;
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const InvariantCheck& c) { return c.passed; });
  }
};

// Runs up to max_rounds rounds of the configured experiment and checks the
// protocol invariants every round.
inline InvariantReport check_invariants(const ExperimentConfig& config,
                                        std::uint64_t max_rounds) {
  ExperimentConfig cfg = config;
  cfg.optimizer.metrics_interval = 0;
  Simulation sim(cfg);
  InvariantCheck doubly{"weights_doubly_stochastic", true, 0.0, 1e-12};
  InvariantCheck connected{"schedule_strongly_connected", true, 0.0, 0.0};
  InvariantCheck a_inv{"normalizing_scalar_is_one", true, 0.0, 1e-12};
  InvariantCheck mean{"mean_dynamics_identity", true, 0.0, 1e-10};
  InvariantCheck dominates{"estimate_dominates_real", true, 0.0, 0.0};

  for (std::size_t t = 0; t < sim.schedule().period(); ++t) {
    const auto& w = sim.weights(t);
    doubly.worst = std::max({doubly.worst, w.max_row_sum_deviation(),
                             w.max_column_sum_deviation()});
  }
  doubly.passed = doubly.worst < doubly.tolerance;
  connected.passed =
      verify_connectivity(sim.schedule(), sim.schedule().period()).has_value();

  const double gamma_n = sim.protocol_params().gamma_n;
  const std::uint64_t rounds = std::min(max_rounds, sim.total_rounds());
  for (std::uint64_t t = 0; t < rounds; ++t) {
    const Vector before = network_mean(sim.nodes());
    Vector after;
    RoundHooks hooks;
    hooks.after_round = [&](std::span<const NodeState> states) {
      after = network_mean(states);
      for (const auto& s : states) {
        a_inv.worst = std::max(a_inv.worst, std::abs(s.norm_scalar - 1.0));
      }
    };
    const PartPspRound r = sim.step(hooks);
    const double n = static_cast<double>(r.perturbations.size());
    for (std::size_t k = 0; k < before.size(); ++k) {
      double predicted = before[k];
      for (std::size_t i = 0; i < r.perturbations.size(); ++i) {
        predicted += r.perturbations[i][k] / n;
        if (!r.protocol.noise_draws[i].vector.empty()) {
          predicted += gamma_n * r.protocol.noise_draws[i].vector[k] / n;
        }
      }
      mean.worst = std::max(mean.worst, std::abs(after[k] - predicted));
    }
    if (t > 0 && sim.protocol_params().source == SensitivitySource::kEstimate) {
      dominates.worst =
          std::max(dominates.worst,
                   r.protocol.real_sensitivity - r.protocol.esti_sensitivity);
    }
  }
  a_inv.passed = a_inv.worst < a_inv.tolerance;
  mean.passed = mean.worst < mean.tolerance;
  dominates.passed = dominates.worst <= 0.0;
  InvariantReport report;
  report.rounds = rounds;
  report.checks = {doubly, connected, a_inv, mean, dominates};
  return report;
}

}  // namespace dpps

#endif  // DPPS_HARNESS_RUNNER_HPP_
