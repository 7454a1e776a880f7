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

#ifndef DPPS_TOPOLOGY_HPP_
#define DPPS_TOPOLOGY_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "dpps/error.hpp"

namespace dpps {

enum class TopologyKind { kDOut, kExp, kCustom };

// Time-varying directed communication graph. Every node always sends to
// itself; `out_neighbors(i, t)` lists node i's recipients at round t, self
// first. Immutable after construction.
class GraphSchedule {
 public:
  // Node i sends to (i + 0) mod N, ..., (i + d - 1) mod N every round.
  static GraphSchedule d_out(std::size_t n_nodes, std::size_t d) {
    if (d < 2 || d > n_nodes) {
      throw ValidationError("d-Out graph requires 2 <= d <= n_nodes, got d=" +
                            std::to_string(d) +
                            " n_nodes=" + std::to_string(n_nodes));
    }
    GraphSchedule g(TopologyKind::kDOut, n_nodes, 1);
    g.out_degree_param_ = d;
    return g;
  }

  // Node i sends to itself and (i + 2^(t mod P)) mod N, with
  // P = floor(log2(N - 1)) + 1.
  static GraphSchedule exp(std::size_t n_nodes) {
    if (n_nodes < 2) {
      throw ValidationError("EXP graph requires n_nodes >= 2, got " +
                            std::to_string(n_nodes));
    }
    return GraphSchedule(TopologyKind::kExp, n_nodes, exp_period(n_nodes));
  }

  // rounds[t] holds the directed edges (sender, receiver) of round t; the
  // schedule repeats with period rounds.size(). Self-loops are implied.
  // Rejects schedules whose uniform weights are not doubly stochastic or whose
  // period-aggregate graph is not strongly connected.
  static GraphSchedule custom(
      std::size_t n_nodes,
      const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>&
          rounds);

  // Parses newline-delimited "t i j" triples (node i sends to node j at
  // round t). Blank lines and '#' comments are ignored.
  static GraphSchedule custom_from_file(std::size_t n_nodes,
                                        const std::string& path);

  TopologyKind kind() const { return kind_; }
  std::size_t n_nodes() const { return n_nodes_; }
  std::size_t period() const { return period_; }
  std::size_t d() const { return out_degree_param_; }

  std::vector<std::size_t> out_neighbors(std::size_t node,
                                         std::uint64_t t) const {
    std::vector<std::size_t> out;
    switch (kind_) {
      case TopologyKind::kDOut:
        for (std::size_t k = 0; k < out_degree_param_; ++k) {
          out.push_back((node + k) % n_nodes_);
        }
        break;
      case TopologyKind::kExp: {
        const std::size_t offset = std::size_t{1} << (t % period_);
        out.push_back(node);
        out.push_back((node + offset) % n_nodes_);
        break;
      }
      case TopologyKind::kCustom:
        out = custom_out_[t % period_][node];
        break;
    }
    return out;
  }

  static std::size_t exp_period(std::size_t n_nodes) {
    if (n_nodes <= 2) return 1;
    std::size_t floor_log2 = 0;
    for (std::size_t v = n_nodes - 1; v > 1; v >>= 1) ++floor_log2;
    return floor_log2 + 1;
  }

 private:
  GraphSchedule(TopologyKind kind, std::size_t n_nodes, std::size_t period)
      : kind_(kind), n_nodes_(n_nodes), period_(period) {}

  TopologyKind kind_;
  std::size_t n_nodes_;
  std::size_t period_;
  std::size_t out_degree_param_ = 0;
  // custom_out_[t][i] = sorted recipients of node i at round t, self first.
  std::vector<std::vector<std::vector<std::size_t>>> custom_out_;
};

// Dense N x N mixing matrix. at(i, j) is the weight node i applies to the
// message received from node j.
class WeightMatrix {
 public:
  WeightMatrix(std::size_t n, std::uint64_t round)
      : n_(n), round_(round), entries_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  std::uint64_t round() const { return round_; }
  double at(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
  double& at(std::size_t i, std::size_t j) { return entries_[i * n_ + j]; }
  const std::vector<double>& entries() const { return entries_; }

  double max_row_sum_deviation() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n_; ++j) sum += at(i, j);
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    return worst;
  }

  double max_column_sum_deviation() const {
    double worst = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n_; ++i) sum += at(i, j);
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    return worst;
  }

  bool is_doubly_stochastic(double tol = 1e-12) const {
    for (double w : entries_) {
      if (w < 0.0 || w > 1.0) return false;
    }
    return max_row_sum_deviation() < tol && max_column_sum_deviation() < tol;
  }

 private:
  std::size_t n_;
  std::uint64_t round_;
  std::vector<double> entries_;
};

// Uniform weights: each sender j splits its message evenly across its
// out-neighbors, so w[i][j] = 1 / outdeg(j) for every edge (j, i).
inline WeightMatrix weight_matrix(const GraphSchedule& schedule,
                                  std::uint64_t t) {
  const std::size_t n = schedule.n_nodes();
  WeightMatrix w(n, t);
  for (std::size_t j = 0; j < n; ++j) {
    const auto out = schedule.out_neighbors(j, t);
    const double share = 1.0 / static_cast<double>(out.size());
    for (std::size_t i : out) w.at(i, j) = share;
  }
  return w;
}

struct ConnectivityReport {
  std::size_t window;    // B
  std::size_t diameter;  // Lambda
};

namespace internal {

using Adjacency = std::vector<std::vector<std::size_t>>;

inline Adjacency aggregate(const GraphSchedule& schedule, std::uint64_t start,
                           std::size_t window) {
  const std::size_t n = schedule.n_nodes();
  Adjacency adj(n);
  for (std::uint64_t t = start; t < start + window; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j : schedule.out_neighbors(i, t)) adj[i].push_back(j);
    }
  }
  for (auto& row : adj) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return adj;
}

// Eccentricity of `source`, or nullopt when some node is unreachable.
inline std::optional<std::size_t> eccentricity(const Adjacency& adj,
                                               std::size_t source) {
  constexpr std::size_t kUnseen = static_cast<std::size_t>(-1);
  std::vector<std::size_t> dist(adj.size(), kUnseen);
  std::queue<std::size_t> frontier;
  dist[source] = 0;
  frontier.push(source);
  std::size_t farthest = 0;
  std::size_t seen = 1;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v : adj[u]) {
      if (dist[v] != kUnseen) continue;
      dist[v] = dist[u] + 1;
      farthest = std::max(farthest, dist[v]);
      ++seen;
      frontier.push(v);
    }
  }
  if (seen != adj.size()) return std::nullopt;
  return farthest;
}

// Directed diameter, or nullopt when the graph is not strongly connected.
inline std::optional<std::size_t> diameter(const Adjacency& adj) {
  std::size_t worst = 0;
  for (std::size_t s = 0; s < adj.size(); ++s) {
    const auto ecc = eccentricity(adj, s);
    if (!ecc) return std::nullopt;
    worst = std::max(worst, *ecc);
  }
  return worst;
}

}  // namespace internal

// Smallest window B <= max_window such that every B-round aggregate graph
// starting within one period is strongly connected, together with the largest
// diameter among those aggregates. nullopt if no such B exists.
inline std::optional<ConnectivityReport> verify_connectivity(
    const GraphSchedule& schedule, std::size_t max_window) {
  for (std::size_t window = 1; window <= max_window; ++window) {
    std::size_t worst = 0;
    bool ok = true;
    for (std::uint64_t start = 0; start < schedule.period() && ok; ++start) {
      const auto diam =
          internal::diameter(internal::aggregate(schedule, start, window));
      if (!diam) {
        ok = false;
      } else {
        worst = std::max(worst, *diam);
      }
    }
    if (ok) return ConnectivityReport{window, worst};
  }
  return std::nullopt;
}

inline GraphSchedule GraphSchedule::custom(
    std::size_t n_nodes,
    const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>&
        rounds) {
  if (n_nodes < 1) throw ValidationError("custom graph requires n_nodes >= 1");
  if (rounds.empty()) {
    throw ValidationError("custom graph requires at least one round");
  }
  GraphSchedule g(TopologyKind::kCustom, n_nodes, rounds.size());
  g.custom_out_.assign(rounds.size(),
                       std::vector<std::vector<std::size_t>>(n_nodes));
  for (std::size_t t = 0; t < rounds.size(); ++t) {
    auto& out = g.custom_out_[t];
    for (std::size_t i = 0; i < n_nodes; ++i) out[i].push_back(i);
    for (const auto& [from, to] : rounds[t]) {
      if (from >= n_nodes || to >= n_nodes) {
        throw ValidationError("custom graph edge (" + std::to_string(from) +
                              ", " + std::to_string(to) + ") at round " +
                              std::to_string(t) + " is out of range");
      }
      if (from != to) out[from].push_back(to);
    }
    for (auto& row : out) {
      std::sort(row.begin() + 1, row.end());
      row.erase(std::unique(row.begin() + 1, row.end()), row.end());
    }
  }
  for (std::size_t t = 0; t < g.period(); ++t) {
    const WeightMatrix w = weight_matrix(g, t);
    if (!w.is_doubly_stochastic()) {
      throw ValidationError(
          "custom graph round " + std::to_string(t) +
          ": uniform out-degree weights are not doubly stochastic (row-sum "
          "deviation " + std::to_string(w.max_row_sum_deviation()) + ")");
    }
  }
  if (!verify_connectivity(g, g.period())) {
    throw ValidationError(
        "custom graph: aggregate over one period is not strongly connected");
  }
  return g;
}

inline GraphSchedule GraphSchedule::custom_from_file(std::size_t n_nodes,
                                                     const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open rounds file: " + path);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> rounds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream fields(line);
    long long t = 0, i = 0, j = 0;
    if (!(fields >> t)) continue;
    std::string extra;
    if (!(fields >> i >> j) || (fields >> extra) || t < 0 || i < 0 || j < 0) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": expected 't i j' with non-negative integers");
    }
    if (rounds.size() <= static_cast<std::size_t>(t)) rounds.resize(t + 1);
    rounds[t].emplace_back(i, j);
  }
  return custom(n_nodes, rounds);
}

}  // namespace dpps

#endif  // DPPS_TOPOLOGY_HPP_
