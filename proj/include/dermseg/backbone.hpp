// Copyright 2026 The Dermseg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dermseg/autodiff.hpp"
#include "dermseg/params.hpp"

namespace dermseg {

inline constexpr std::size_t kNumBlocks = 5;

/// Plain five-block convolutional encoder. Each block is a 3x3 convolution
/// (dilated by `block_dilations[b]`, same padding) followed by ReLU and, when
/// `block_strides[b] == 2`, a 2x2 max-pool.
struct BackboneConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> block_channels{8, 16, 32, 32, 32};
  std::vector<std::size_t> block_strides{1, 2, 2, 1, 1};
  /// Blocks 4 and 5 trade stride for dilation so the top keeps block 3's
  /// resolution.
  std::vector<std::size_t> block_dilations{1, 1, 1, 2, 4};
  /// Channels of the 1x1 reduction that produces F0.
  std::size_t reduce_channels = 16;

  /// Throws ValueError for wrong list lengths or out-of-range entries.
  void validate() const;

  /// Product of the strides of blocks 0..b inclusive.
  std::size_t cumulative_stride(std::size_t b) const;
  std::size_t total_stride() const { return cumulative_stride(kNumBlocks - 1); }
};

template <typename T>
struct BlockOutputs {
  std::vector<T> blocks;  // one per block
  T reduced;              // F0
};

using BlockVars = BlockOutputs<Var>;
using BlockFeatures = BlockOutputs<Tensor>;

/// Adds `backbone.block{1..5}` and `backbone.reduce` parameters.
void init_backbone_params(const BackboneConfig& config, std::mt19937_64& rng,
                          ParamSet& params);

ParamSet init_params(const BackboneConfig& config, std::uint64_t seed);

/// Image is C x H x W or N x C x H x W with H, W divisible by the total
/// stride.
BlockVars backbone_forward(const Var& image, const BackboneConfig& config,
                           const VarMap& params);

BlockFeatures backbone_forward(const Tensor& image, const BackboneConfig& config,
                               const ParamSet& params);

}  // namespace dermseg
