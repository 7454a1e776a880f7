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

#ifndef DPPS_HARNESS_METRICS_HPP_
#define DPPS_HARNESS_METRICS_HPP_

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dpps/error.hpp"
#include "json.hpp"

namespace dpps {

struct RoundMetrics {
  std::uint64_t round = 0;
  double esti_sensitivity = 0.0;
  double real_sensitivity = 0.0;
  double mean_eps_l1 = 0.0;
  double mean_noise_l1 = 0.0;
  bool synced = false;
  double loss_mean = 0.0;
  std::optional<double> objective;
  std::optional<double> delta_l;
  std::optional<double> delta_sbar;
  double ras_running = 0.0;
  double epsilon_per_round = 0.0;
};

struct RunSummary {
  double final_acc = 0.0;
  double ras = 0.0;
  double peak_sensitivity = 0.0;       // max real sensitivity
  double peak_esti_sensitivity = 0.0;  // max estimated sensitivity
  double final_loss = 0.0;
  std::uint64_t total_rounds = 0;
  double wall_time = 0.0;  // seconds
  double epsilon_per_round = 0.0;
  double c_prime = 0.0;
  double lambda = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "round,esti_sensitivity,real_sensitivity,mean_eps_l1,mean_noise_l1,synced,"
    "loss_mean,objective,delta_l,delta_sbar,ras_running,epsilon_per_round";

namespace internal {

inline std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string g17(const std::optional<double>& x) {
  return x ? g17(*x) : std::string();
}

inline void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) {
      throw std::runtime_error("cannot create directory " +
                               path.parent_path().string() + ": " + ec.message());
    }
  }
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace internal

inline std::string format_metrics_row(const RoundMetrics& m) {
  using internal::g17;
  return std::to_string(m.round) + "," + g17(m.esti_sensitivity) + "," +
         g17(m.real_sensitivity) + "," + g17(m.mean_eps_l1) + "," +
         g17(m.mean_noise_l1) + "," + (m.synced ? "true" : "false") + "," +
         g17(m.loss_mean) + "," + g17(m.objective) + "," + g17(m.delta_l) + "," + g17(m.delta_sbar) +
         "," + g17(m.ras_running) + "," + g17(m.epsilon_per_round);
}

// One header line and one line per row. Delta columns are empty on rounds
// where they were not evaluated.
inline void emit_metrics(const std::vector<RoundMetrics>& rows,
                         const std::filesystem::path& path) {
  if (rows.empty()) throw ValidationError("emit_metrics: no rows");
  auto out = internal::open_for_write(path);
  out << kMetricsHeader << "\n";
  for (const auto& m : rows) out << format_metrics_row(m) << "\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline nlohmann::json to_json(const RunSummary& s) {
  return nlohmann::json{{"final_acc", s.final_acc},
                        {"ras", s.ras},
                        {"peak_sensitivity", s.peak_sensitivity},
                        {"peak_esti_sensitivity", s.peak_esti_sensitivity},
                        {"final_loss", s.final_loss},
                        {"total_rounds", s.total_rounds},
                        {"wall_time", s.wall_time},
                        {"epsilon_per_round", s.epsilon_per_round},
                        {"c_prime", s.c_prime},
                        {"lambda", s.lambda}};
}

inline void write_summary(const RunSummary& s, const std::filesystem::path& path) {
  auto out = internal::open_for_write(path);
  out << to_json(s).dump(2) << "\n";
}

struct SweepRow {
  double value = 0.0;
  double ras = 0.0;
  double peak_sensitivity = 0.0;
};

inline void emit_sweep(const std::vector<SweepRow>& rows,
                       const std::filesystem::path& path) {
  auto out = internal::open_for_write(path);
  out << "axis_value,ras,peak_sensitivity\n";
  for (const auto& r : rows) {
    out << internal::g17(r.value) << "," << internal::g17(r.ras) << ","
        << internal::g17(r.peak_sensitivity) << "\n";
  }
}

}  // namespace dpps

#endif  // DPPS_HARNESS_METRICS_HPP_
