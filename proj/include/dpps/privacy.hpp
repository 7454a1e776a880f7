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

#ifndef DPPS_PRIVACY_HPP_
#define DPPS_PRIVACY_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpps/error.hpp"
#include "dpps/rng.hpp"
#include "dpps/vector_ops.hpp"

namespace dpps {

// Constants of the per-node sensitivity recursion. Both are fitted
// empirically for a given topology and partition; see calibrate().
struct EstimatorConstants {
  double c_prime = 0.78;
  double lambda = 0.55;

  void validate() const {
    if (!(c_prime > 0.0) || !std::isfinite(c_prime)) {
      throw ValidationError("c_prime must be positive, got " +
                            std::to_string(c_prime));
    }
    if (!(lambda > 0.0 && lambda < 1.0)) {
      throw ValidationError("lambda must lie in (0, 1), got " +
                            std::to_string(lambda));
    }
  }
};

// Running upper bound S_i on how far node i's outgoing shared vector can be
// from any other node's. Two scalars of history are all it needs: the value
// itself and the L1 norm of the noise the node added last round.
struct SensitivityEstimate {
  double value = 0.0;
  double c_prime = 0.0;
  double lambda = 0.0;
  double last_noise_l1 = 0.0;
  std::uint64_t round = 0;
};

// First round after start-up or a reset:
//   S = 2 C' (||s_0||_1 + ||eps_0||_1).
inline SensitivityEstimate init_estimate(double s0_l1, double eps0_l1,
                                         double c_prime, double lambda) {
  EstimatorConstants{c_prime, lambda}.validate();
  if (s0_l1 < 0.0 || eps0_l1 < 0.0) {
    throw ValidationError("init_estimate: norms must be non-negative");
  }
  return SensitivityEstimate{2.0 * c_prime * s0_l1 + 2.0 * c_prime * eps0_l1,
                             c_prime, lambda, 0.0, 0};
}

//   S' = lambda S + 2 C' (||eps||_1 + lambda gamma_n ||n_prev||_1).
inline SensitivityEstimate update_estimate(const SensitivityEstimate& est,
                                           double eps_l1, double prev_noise_l1,
                                           double gamma_n) {
  SensitivityEstimate next = est;
  next.value = est.lambda * est.value +
               2.0 * est.c_prime *
                   (eps_l1 + est.lambda * gamma_n * prev_noise_l1);
  next.round = est.round + 1;
  return next;
}

// Maximum of the per-node estimates. The network realizes this with one
// scalar broadcast per node; here it is an exact global max.
inline double network_sensitivity(std::span<const SensitivityEstimate> ests) {
  double s = 0.0;
  for (const auto& e : ests) s = std::max(s, e.value);
  return s;
}

struct NoiseDraw {
  Vector vector;
  double scale = 0.0;
  double l1_norm = 0.0;
};

// Exact zero draw used when the sensitivity is zero or noise is disabled.
inline NoiseDraw zero_noise(std::size_t dim) {
  return NoiseDraw{Vector(dim, 0.0), 0.0, 0.0};
}

// dim i.i.d. draws from Lap(0, scale) by inverse CDF, one uniform per
// coordinate: x = -scale * sgn(u) * ln(1 - 2|u|), u ~ U(-1/2, 1/2).
// scale == 0 returns an exact zero draw without touching the engine.
inline NoiseDraw sample_laplace(double scale, std::size_t dim, Engine& engine) {
  if (!(scale >= 0.0) || !std::isfinite(scale)) {
    throw ValidationError("sample_laplace: scale must be finite and >= 0, got " +
                          std::to_string(scale));
  }
  if (scale == 0.0) return zero_noise(dim);
  NoiseDraw draw;
  draw.scale = scale;
  draw.vector.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const double u = uniform_open01(engine) - 0.5;
    const double magnitude = -scale * std::log1p(-2.0 * std::abs(u));
    draw.vector[k] = u < 0.0 ? -magnitude : magnitude;
  }
  draw.l1_norm = l1_norm(draw.vector);
  return draw;
}

inline double laplace_density(double x, double scale) {
  return std::exp(-std::abs(x) / scale) / (2.0 * scale);
}

// Ground truth: max over pairs of ||s_i - s_j||_1. O(N^2 d).
inline double real_sensitivity(std::span<const Vector> shared) {
  double worst = 0.0;
  for (std::size_t i = 0; i < shared.size(); ++i) {
    require_same_size(shared[i].size(), shared[0].size(), "real_sensitivity");
    for (std::size_t j = i + 1; j < shared.size(); ++j) {
      worst = std::max(worst, l1_distance(shared[i], shared[j]));
    }
  }
  return worst;
}

// Per-round guarantee of the Laplace mechanism with noise rate gamma_n.
struct PrivacyBudget {
  double b = 0.0;
  double gamma_n = 0.0;
  double epsilon_per_round = 0.0;
};

inline PrivacyBudget privacy_budget(double b, double gamma_n) {
  if (!(b > 0.0) || !(gamma_n > 0.0)) {
    throw ValidationError("privacy budget requires b > 0 and gamma_n > 0");
  }
  return PrivacyBudget{b, gamma_n, b / gamma_n};
}

}  // namespace dpps

#endif  // DPPS_PRIVACY_HPP_
