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

#ifndef DPPS_TASKS_EVALUATE_HPP_
#define DPPS_TASKS_EVALUATE_HPP_

#include <span>
#include <vector>

#include "dpps/error.hpp"
#include "dpps/protocol.hpp"
#include "dpps/tasks/dataset.hpp"

namespace dpps {

struct NetworkAccuracy {
  std::vector<double> per_node;
  double final_acc = 0.0;
};

// Every node evaluates (s_bar, l_i) on the whole test set; the reported
// accuracy is the mean over nodes.
template <class Task>
NetworkAccuracy evaluate_network(std::span<const NodeState> states,
                                 const Task& task, const Dataset& test) {
  if (test.size() == 0) throw ValidationError("evaluate_network: empty test set");
  const Vector mean = network_mean(states);
  NetworkAccuracy out;
  double sum = 0.0;
  for (const auto& s : states) {
    out.per_node.push_back(task.accuracy(mean, s.local, test));
    sum += out.per_node.back();
  }
  out.final_acc = sum / static_cast<double>(states.size());
  return out;
}

}  // namespace dpps

#endif  // DPPS_TASKS_EVALUATE_HPP_
