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

#ifndef DPPS_DPPS_HPP_
#define DPPS_DPPS_HPP_

#include "dpps/error.hpp"
#include "dpps/harness/config.hpp"
#include "dpps/harness/metrics.hpp"
#include "dpps/harness/runner.hpp"
#include "dpps/optimizer.hpp"
#include "dpps/partition.hpp"
#include "dpps/privacy.hpp"
#include "dpps/protocol.hpp"
#include "dpps/rng.hpp"
#include "dpps/tasks/dataset.hpp"
#include "dpps/tasks/evaluate.hpp"
#include "dpps/tasks/mlp.hpp"
#include "dpps/topology.hpp"
#include "dpps/vector_ops.hpp"

#endif  // DPPS_DPPS_HPP_
