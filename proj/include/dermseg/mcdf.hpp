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

// Multi-scale consistent decision fusion.
//
// K skip heads each emit a full-resolution class-score map S^k. For every
// position p the local spread of S^k over an l_k x l_k window gives a
// consistency weight
//
//   alpha^k_p = exp(-(sigma^k_p)^2 / sigma_sq),
//   sigma^k_p = sqrt(mean_L (S^k - mean_L S^k)^2),
//
// and the fused score is S_p = sum_k alpha^k_p S^k_p. Statistics are taken
// per class channel with edge-replicated windows.

#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dermseg/autodiff.hpp"
#include "dermseg/backbone.hpp"
#include "dermseg/bidfl.hpp"
#include "dermseg/params.hpp"

namespace dermseg {

struct ScoreStack {
  std::vector<Var> maps;
  std::vector<std::size_t> windows;
  double sigma_sq = 10.0;

  /// Equal map shapes, one odd window per map that fits the map, and
  /// sigma_sq > 0.
  void validate() const;
};

enum class HeadSource {
  kBlock,  // backbone block `index`
  kTop,    // fused bidirectional features, or the last block without them
  kLevel,  // per-level refined map `index`
};

struct HeadSpec {
  std::string name;
  HeadSource source = HeadSource::kBlock;
  std::size_t index = 0;
  std::size_t in_channels = 0;
  /// Upsampling factor back to label resolution.
  std::size_t factor = 1;
  std::size_t window = 3;
};

using HeadLayout = std::vector<HeadSpec>;

/// 3 for the first three heads, then 5, 7, 9, ... for the rest.
std::vector<std::size_t> default_window_schedule(std::size_t heads);

/// Heads for blocks 1-4, the top features, and (with bidirectional
/// learning) one per dilation level: K = 5 + J. An empty `windows` selects
/// the default schedule.
HeadLayout make_head_layout(const BackboneConfig& backbone,
                            const BidflConfig* bidfl, std::size_t num_classes,
                            const std::vector<std::size_t>& windows = {});

/// `heads.<name>.classify` (1x1 to classes) and, when factor > 1,
/// `heads.<name>.upsample` (bilinear-initialised transposed convolution).
/// With levels, also `heads.level<j>.mix`.
void init_head_params(const HeadLayout& layout, std::size_t num_classes,
                      const BidflConfig* bidfl, std::mt19937_64& rng,
                      ParamSet& params);

/// Per-level maps read by the level heads: relu(1x1(concat(F'_j, F''_j))).
std::vector<Var> level_maps(const BidflOutput& refined, const VarMap& params);

/// Runs every head of `layout` on its source. `top` is the fused
/// bidirectional output, or null to use the last backbone block.
ScoreStack score_heads(const BlockVars& blocks, const Var* top,
                       std::span<const Var> levels, const HeadLayout& layout,
                       const VarMap& params, double sigma_sq);

/// Population standard deviation over the window, per channel.
Tensor local_std(const Tensor& score, std::size_t window);

/// exp(-sigma^2 / sigma_sq) elementwise.
Tensor consistency_coeff(const Tensor& sigma, double sigma_sq);

/// alpha computed directly from the local variance, so the gradient stays
/// finite where the window is constant.
Var consistency(const Var& score, std::size_t window, double sigma_sq);

/// sum_k alpha^k * S^k. With `stop_gradient` alpha is treated as constant
/// during backpropagation.
Var fuse_scores(const ScoreStack& stack, bool stop_gradient = false);

/// Plain sum_k S^k.
Var sum_fuse(const ScoreStack& stack);

}  // namespace dermseg
