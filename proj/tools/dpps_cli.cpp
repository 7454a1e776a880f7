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

// Command-line front end for running DPPS / PartPSP experiments.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpps/dpps.hpp"
#include "json.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInvariant = 2;

std::vector<std::size_t> parse_values(const std::string& csv) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const auto comma = csv.find(',', pos);
    const std::string item =
        csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw dpps::ValidationError("--values: '" + item +
                                  "' is not a positive integer");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void print_warnings(const dpps::ExperimentConfig& c) {
  for (const auto& w : dpps::validate_config(c)) {
    std::cerr << "warning: " << w << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DPPS: differentially private perturbed push-sum simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool test_mode = false;

  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--set", overrides, "override a key, e.g. privacy.b=2");
  run->add_flag("--test-mode", test_mode,
                "abort with exit code 2 if the estimate is ever exceeded");

  std::string axis;
  std::string values;
  auto* sweep = app.add_subcommand("sweep", "sensitivity sweep over one axis");
  sweep->add_option("--config", config_path, "config file")->required();
  sweep->add_option("--set", overrides, "override a key");
  sweep->add_option("--axis", axis, "shared_layers|out_degree|n_nodes")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();

  double headroom = 0.1;
  auto* calib = app.add_subcommand("calibrate", "fit C' and lambda on a noiseless run");
  calib->add_option("--config", config_path, "config file")->required();
  calib->add_option("--set", overrides, "override a key");
  calib->add_option("--headroom", headroom, "relative safety margin");

  auto* validate = app.add_subcommand("validate-config", "check a config file");
  validate->add_option("--config", config_path, "config file")->required();
  validate->add_option("--set", overrides, "override a key");

  std::uint64_t max_rounds = 50;
  auto* check = app.add_subcommand("check-invariants", "run and check protocol invariants");
  check->add_option("--config", config_path, "config file")->required();
  check->add_option("--set", overrides, "override a key");
  check->add_option("--rounds", max_rounds, "maximum rounds to run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    const dpps::ExperimentConfig cfg = dpps::load_config(config_path, overrides);
    print_warnings(cfg);

    if (*validate) {
      std::cout << "ok\n";
      return kExitOk;
    }
    if (*run) {
      dpps::RunOptions opts;
      opts.test_mode = test_mode;
      const auto r = dpps::run_experiment(cfg, opts);
      std::cout << dpps::to_json(r.summary).dump(2) << "\n";
      return kExitOk;
    }
    if (*sweep) {
      const auto rows = dpps::run_sensitivity_sweep(
          cfg, dpps::parse_sweep_axis(axis), parse_values(values));
      std::cout << "axis_value,ras,peak_sensitivity\n";
      for (const auto& row : rows) {
        std::printf("%g,%.6g,%.6g\n", row.value, row.ras, row.peak_sensitivity);
      }
      return kExitOk;
    }
    if (*calib) {
      const auto c = dpps::calibrate(cfg, headroom);
      nlohmann::json j;
      j["c_prime"] = c.c_prime;
      j["lambda"] = c.lambda;
      j["headroom"] = c.headroom;
      j["rounds"] = c.rounds;
      j["max_target"] = c.max_target;
      std::cout << j.dump(2) << "\n";
      return kExitOk;
    }
    if (*check) {
      const auto report = dpps::check_invariants(cfg, max_rounds);
      for (const auto& c : report.checks) {
        std::printf("%s %s worst=%.6g tol=%.3g\n", c.passed ? "PASS" : "FAIL",
                    c.name.c_str(), c.worst, c.tolerance);
      }
      return report.passed() ? kExitOk : kExitInvariant;
    }
  } catch (const dpps::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const dpps::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
