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

#ifndef DPPS_RNG_HPP_
#define DPPS_RNG_HPP_

#include <cstdint>
#include <random>

namespace dpps {

// Independent purposes for which a node draws randomness. Each purpose gets
// its own generator.
enum class StreamKind : std::uint32_t {
  kNoise = 1,
  kData = 2,
  kInit = 3,
  kDataset = 4,
};

using Engine = std::mt19937_64;

// Seeds an engine from (master_seed, node_id, kind). Node id ~0 is reserved
// for streams that are shared by the whole network.
// `salt` separates sub-streams of one purpose, e.g. the epoch of a shuffle.
inline Engine make_stream(std::uint64_t master_seed, std::uint64_t node_id,
                          StreamKind kind, std::uint64_t salt = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(node_id),
                    static_cast<std::uint32_t>(node_id >> 32),
                    static_cast<std::uint32_t>(kind),
                    static_cast<std::uint32_t>(salt),
                    static_cast<std::uint32_t>(salt >> 32)};
  return Engine(seq);
}

inline constexpr std::uint64_t kSharedStream = ~std::uint64_t{0};

// Uniform on the open interval (0, 1): 53 random bits, offset by half an ulp
// so neither endpoint is reachable.
inline double uniform_open01(Engine& engine) {
  const std::uint64_t bits = engine() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace dpps

#endif  // DPPS_RNG_HPP_
