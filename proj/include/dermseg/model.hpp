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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dermseg/backbone.hpp"
#include "dermseg/bidfl.hpp"
#include "dermseg/mcdf.hpp"

namespace dermseg {

/// Which of the two mechanisms sit on top of the baseline network.
struct Ablation {
  bool use_bidfl = true;
  bool use_mcdf = true;

  /// "baseline", "bidfl", "mcdf" or "bidfl+mcdf".
  static Ablation parse(const std::string& text);
  std::string name() const;

  friend bool operator==(const Ablation&, const Ablation&) = default;
};

/// Channel 0 is lesion and channel 1 is background.
inline constexpr std::size_t kLesionChannel = 0;
inline constexpr std::size_t kNumClasses = 2;

struct ModelConfig {
  BackboneConfig backbone;
  BidflConfig bidfl;
  Ablation ablation;
  double sigma_sq = 10.0;
  /// Empty selects default_window_schedule.
  std::vector<std::size_t> windows;
  /// Treat alpha as a constant during backpropagation.
  bool stop_alpha_gradient = false;

  /// Also checks that the bank reads the reduced channel count.
  void validate() const;
  HeadLayout head_layout() const;
};

/// Desk-scale network: 64x64 inputs, total stride 4, rates (1,2,4,6,8).
ModelConfig desk_model_config();

ParamSet init_model(const ModelConfig& config, std::uint64_t seed);

struct ModelOutput {
  ScoreStack stack;
  Var scores;  // fused class scores, N x 2 x H x W
  Var probs;   // softmax over classes
};

ModelOutput model_forward(const ModelConfig& config, const VarMap& params,
                          const Var& image);

/// Lesion probability map (1 x H x W, or N x 1 x H x W).
Tensor predict_lesion_prob(const ModelConfig& config, const ParamSet& params,
                           const Tensor& image);

/// prob > 0.5, which equals the argmax for two classes.
Tensor binarize(const Tensor& lesion_prob, double threshold = 0.5);

}  // namespace dermseg
