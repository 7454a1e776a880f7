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

#ifndef DPPS_VECTOR_OPS_HPP_
#define DPPS_VECTOR_OPS_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dpps/error.hpp"

namespace dpps {

using Vector = std::vector<double>;

inline double l1_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += std::abs(x);
  return sum;
}

inline double squared_l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return sum;
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sum += std::abs(a[k] - b[k]);
  return sum;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline void require_same_size(std::size_t a, std::size_t b,
                              const std::string& what) {
  if (a != b) {
    throw ValidationError(what + ": dimension mismatch (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
  }
}

}  // namespace dpps

#endif  // DPPS_VECTOR_OPS_HPP_
