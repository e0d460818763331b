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

#include "dermseg/mcdf.hpp"

#include <algorithm>
#include <cmath>

namespace dermseg {
namespace {

void check_sigma_sq(double sigma_sq) {
  if (!(sigma_sq > 0.0)) {
    throw ValueError("sigma_sq must be > 0, got " + std::to_string(sigma_sq));
  }
}

std::string level_name(std::size_t j) { return "level" + std::to_string(j); }

}  // namespace

void ScoreStack::validate() const {
  if (maps.empty()) throw ShapeError("score stack is empty");
  if (windows.size() != maps.size()) {
    throw ValueError("score stack has " + std::to_string(maps.size()) +
                     " maps but " + std::to_string(windows.size()) + " windows");
  }
  check_sigma_sq(sigma_sq);
  const ImageDims d = image_dims(maps.front().value(), "score stack");
  for (std::size_t k = 0; k < maps.size(); ++k) {
    if (maps[k].shape() != maps.front().shape()) {
      throw ShapeError("score map " + std::to_string(k) + " has shape " +
                       to_string(maps[k].shape()) + ", expected " +
                       to_string(maps.front().shape()));
    }
    detail::check_window(windows[k], "score stack");
    if (windows[k] > std::min(d.h, d.w)) {
      throw ValueError("window " + std::to_string(windows[k]) +
                       " exceeds score map extent");
    }
  }
}

std::vector<std::size_t> default_window_schedule(std::size_t heads) {
  std::vector<std::size_t> w;
  for (std::size_t k = 0; k < heads; ++k) w.push_back(k < 3 ? 3 : 2 * k - 1);
  return w;
}

HeadLayout make_head_layout(const BackboneConfig& backbone,
                            const BidflConfig* bidfl, std::size_t num_classes,
                            const std::vector<std::size_t>& windows) {
  backbone.validate();
  if (num_classes == 0) throw ValueError("heads: num_classes must be positive");
  HeadLayout layout;
  for (std::size_t b = 0; b + 1 < kNumBlocks; ++b) {
    layout.push_back({"block" + std::to_string(b + 1), HeadSource::kBlock, b,
                      backbone.block_channels[b], backbone.cumulative_stride(b),
                      0});
  }
  layout.push_back({"top", HeadSource::kTop, kNumBlocks - 1,
                    bidfl ? bidfl->bank_channels
                          : backbone.block_channels[kNumBlocks - 1],
                    backbone.total_stride(), 0});
  if (bidfl) {
    for (std::size_t j = 1; j <= bidfl->levels(); ++j) {
      layout.push_back({level_name(j), HeadSource::kLevel, j - 1,
                        bidfl->bank_channels, backbone.total_stride(), 0});
    }
  }
  const std::vector<std::size_t> schedule =
      windows.empty() ? default_window_schedule(layout.size()) : windows;
  if (schedule.size() != layout.size()) {
    throw ValueError("heads: " + std::to_string(schedule.size()) +
                     " windows for " + std::to_string(layout.size()) + " heads");
  }
  for (std::size_t k = 0; k < layout.size(); ++k) {
    detail::check_window(schedule[k], "heads");
    layout[k].window = schedule[k];
  }
  return layout;
}

void init_head_params(const HeadLayout& layout, std::size_t num_classes,
                      const BidflConfig* bidfl, std::mt19937_64& rng,
                      ParamSet& params) {
  if (bidfl) {
    for (std::size_t j = 1; j <= bidfl->levels(); ++j) {
      add_he_conv(params, "heads." + level_name(j) + ".mix", bidfl->bank_channels,
                  2 * bidfl->bank_channels, 1, rng);
    }
  }
  for (const HeadSpec& h : layout) {
    // Zero score layers: every head starts from the uniform prediction.
    add_zero_conv(params, "heads." + h.name + ".classify", num_classes,
                  h.in_channels, 1);
    if (h.factor > 1) {
      add_bilinear_upsample(params, "heads." + h.name + ".upsample", num_classes,
                            h.factor);
    }
  }
}

std::vector<Var> level_maps(const BidflOutput& refined, const VarMap& params) {
  std::vector<Var> out;
  for (std::size_t j = 0; j < refined.forward.size(); ++j) {
    const Var parts[] = {refined.forward[j], refined.backward[j]};
    const ConvLayer mix = conv_layer(params, "heads." + level_name(j + 1) + ".mix");
    out.push_back(ad::relu(mix(ad::concat_channels(parts))));
  }
  return out;
}

ScoreStack score_heads(const BlockVars& blocks, const Var* top,
                       std::span<const Var> levels, const HeadLayout& layout,
                       const VarMap& params, double sigma_sq) {
  ScoreStack stack;
  stack.sigma_sq = sigma_sq;
  for (const HeadSpec& h : layout) {
    Var src;
    switch (h.source) {
      case HeadSource::kBlock:
        src = blocks.blocks.at(h.index);
        break;
      case HeadSource::kTop:
        src = top ? *top : blocks.blocks.at(h.index);
        break;
      case HeadSource::kLevel:
        if (h.index >= levels.size()) {
          throw ValueError("heads: layout expects level " +
                           std::to_string(h.index + 1) + " but only " +
                           std::to_string(levels.size()) + " were given");
        }
        src = levels[h.index];
        break;
    }
    Var score = conv_layer(params, "heads." + h.name + ".classify")(src);
    if (h.factor > 1) {
      const ConvGeometry up{1, h.factor, h.factor / 2};
      score = conv_layer(params, "heads." + h.name + ".upsample", up)
                  .transposed(score);
    }
    stack.maps.push_back(score);
    stack.windows.push_back(h.window);
  }
  stack.validate();
  return stack;
}

Tensor local_std(const Tensor& score, std::size_t window) {
  Tensor v = local_variance(score, window);
  for (double& x : v.data()) x = std::sqrt(std::max(x, 0.0));
  return v;
}

Tensor consistency_coeff(const Tensor& sigma, double sigma_sq) {
  check_sigma_sq(sigma_sq);
  Tensor a = sigma;
  for (double& x : a.data()) x = std::exp(-(x * x) / sigma_sq);
  return a;
}

Var consistency(const Var& score, std::size_t window, double sigma_sq) {
  check_sigma_sq(sigma_sq);
  return ad::exp(ad::scale(ad::local_variance(score, window), -1.0 / sigma_sq));
}

Var fuse_scores(const ScoreStack& stack, bool stop_gradient) {
  stack.validate();
  Var fused;
  for (std::size_t k = 0; k < stack.maps.size(); ++k) {
    Var alpha = consistency(stack.maps[k], stack.windows[k], stack.sigma_sq);
    if (stop_gradient) alpha = ad::detach(alpha);
    Var term = ad::mul(alpha, stack.maps[k]);
    fused = fused ? ad::add(fused, term) : term;
  }
  return fused;
}

Var sum_fuse(const ScoreStack& stack) {
  if (stack.maps.empty()) throw ShapeError("sum_fuse: empty score stack");
  Var fused = stack.maps.front();
  for (std::size_t k = 1; k < stack.maps.size(); ++k) {
    fused = ad::add(fused, stack.maps[k]);
  }
  return fused;
}

}  // namespace dermseg
