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

#ifndef DPPS_PARTITION_HPP_
#define DPPS_PARTITION_HPP_

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpps/error.hpp"
#include "dpps/vector_ops.hpp"

namespace dpps {

enum class BlockRole { kShared, kLocal };

struct NamedBlock {
  std::string name;
  std::size_t size = 0;
};

enum class PartitionScheme { kShareFirstK, kShareAll, kCustom };

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::kShareFirstK;
  std::size_t k = 1;             // kShareFirstK
  std::vector<BlockRole> roles;  // kCustom, one per block
};

// Splits an ordered list of parameter blocks into the shared vector s (the
// concatenation of shared blocks, in order) and the local vector l.
class PartitionedModel {
 public:
  struct Block {
    NamedBlock info;
    BlockRole role;
    std::size_t full_offset;
    std::size_t part_offset;  // offset inside s or l
  };

  PartitionedModel(std::vector<NamedBlock> blocks,
                   const std::vector<BlockRole>& roles) {
    require_same_size(blocks.size(), roles.size(), "partition roles");
    std::size_t full = 0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      std::size_t& part = roles[b] == BlockRole::kShared ? shared_dim_ : local_dim_;
      blocks_.push_back(Block{std::move(blocks[b]), roles[b], full, part});
      full += blocks_.back().info.size;
      part += blocks_.back().info.size;
    }
    if (shared_dim_ == 0) {
      throw ValidationError("partition must share at least one parameter");
    }
  }

  std::size_t shared_dim() const { return shared_dim_; }
  std::size_t local_dim() const { return local_dim_; }
  std::size_t total_dim() const { return shared_dim_ + local_dim_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  // Full parameter list -> (s, l).
  std::pair<Vector, Vector> split(std::span<const double> full) const {
    require_same_size(full.size(), total_dim(), "PartitionedModel::split");
    std::pair<Vector, Vector> parts{Vector(shared_dim_), Vector(local_dim_)};
    for (const auto& b : blocks_) {
      Vector& dst = b.role == BlockRole::kShared ? parts.first : parts.second;
      std::copy_n(full.begin() + b.full_offset, b.info.size,
                  dst.begin() + b.part_offset);
    }
    return parts;
  }

  // (s, l) -> full parameter list.
  Vector join(std::span<const double> shared,
              std::span<const double> local) const {
    require_same_size(shared.size(), shared_dim_, "PartitionedModel::join shared");
    require_same_size(local.size(), local_dim_, "PartitionedModel::join local");
    Vector full(total_dim());
    for (const auto& b : blocks_) {
      const auto src = b.role == BlockRole::kShared ? shared : local;
      std::copy_n(src.begin() + b.part_offset, b.info.size,
                  full.begin() + b.full_offset);
    }
    return full;
  }

 private:
  std::vector<Block> blocks_;
  std::size_t shared_dim_ = 0;
  std::size_t local_dim_ = 0;
};

inline PartitionedModel partition_model(std::vector<NamedBlock> blocks,
                                        const PartitionSpec& spec) {
  std::vector<BlockRole> roles(blocks.size(), BlockRole::kLocal);
  switch (spec.scheme) {
    case PartitionScheme::kShareFirstK:
      if (spec.k == 0 || spec.k > blocks.size()) {
        throw ValidationError("share_first_k: k must be in [1, " +
                              std::to_string(blocks.size()) + "], got " +
                              std::to_string(spec.k));
      }
      for (std::size_t b = 0; b < spec.k; ++b) roles[b] = BlockRole::kShared;
      break;
    case PartitionScheme::kShareAll:
      roles.assign(blocks.size(), BlockRole::kShared);
      break;
    case PartitionScheme::kCustom:
      roles = spec.roles;
      break;
  }
  return PartitionedModel(std::move(blocks), roles);
}

}  // namespace dpps

#endif  // DPPS_PARTITION_HPP_
