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

#include "dermseg/backbone.hpp"

#include <string>

namespace dermseg {
namespace {

std::string block_name(std::size_t b) {
  return "backbone.block" + std::to_string(b + 1);
}

void require_length(const std::vector<std::size_t>& v, const char* field) {
  if (v.size() != kNumBlocks) {
    throw ValueError(std::string("backbone: ") + field + " lists " +
                     std::to_string(v.size()) + " entries, expected " +
                     std::to_string(kNumBlocks));
  }
}

}  // namespace

void BackboneConfig::validate() const {
  require_length(block_channels, "block channels");
  require_length(block_strides, "block strides");
  require_length(block_dilations, "block dilations");
  if (in_channels == 0 || reduce_channels == 0) {
    throw ValueError("backbone: channel counts must be positive");
  }
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    if (block_channels[b] == 0) {
      throw ValueError("backbone: block " + std::to_string(b + 1) +
                       " has zero channels");
    }
    if (block_strides[b] != 1 && block_strides[b] != 2) {
      throw ValueError("backbone: block " + std::to_string(b + 1) +
                       " stride must be 1 or 2");
    }
    if (block_dilations[b] == 0) {
      throw ValueError("backbone: block " + std::to_string(b + 1) +
                       " dilation must be >= 1");
    }
  }
}

std::size_t BackboneConfig::cumulative_stride(std::size_t b) const {
  std::size_t s = 1;
  for (std::size_t i = 0; i <= b && i < block_strides.size(); ++i) {
    s *= block_strides[i];
  }
  return s;
}

void init_backbone_params(const BackboneConfig& config, std::mt19937_64& rng,
                          ParamSet& params) {
  config.validate();
  std::size_t in = config.in_channels;
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    add_he_conv(params, block_name(b), config.block_channels[b], in, 3, rng);
    in = config.block_channels[b];
  }
  add_he_conv(params, "backbone.reduce", config.reduce_channels, in, 1, rng);
}

ParamSet init_params(const BackboneConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet params;
  init_backbone_params(config, rng, params);
  return params;
}

BlockVars backbone_forward(const Var& image, const BackboneConfig& config,
                           const VarMap& params) {
  config.validate();
  const ImageDims d = image_dims(image.value(), "backbone");
  const std::size_t stride = config.total_stride();
  if (d.h % stride != 0 || d.w % stride != 0) {
    throw ValueError("backbone: input " + std::to_string(d.h) + "x" +
                     std::to_string(d.w) + " is not divisible by cumulative stride " +
                     std::to_string(stride));
  }
  BlockVars out;
  Var x = image;
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    const ConvLayer conv = conv_layer(
        params, block_name(b), ConvGeometry::same(3, config.block_dilations[b]));
    x = ad::relu(conv(x));
    if (config.block_strides[b] == 2) x = ad::max_pool2d(x, 2, 2);
    out.blocks.push_back(x);
  }
  out.reduced = conv_layer(params, "backbone.reduce")(x);
  return out;
}

BlockFeatures backbone_forward(const Tensor& image, const BackboneConfig& config,
                               const ParamSet& params) {
  const BlockVars vars =
      backbone_forward(constant(image), config, bind(params, false));
  BlockFeatures out;
  for (const Var& v : vars.blocks) out.blocks.push_back(v.value());
  out.reduced = vars.reduced.value();
  return out;
}

}  // namespace dermseg
