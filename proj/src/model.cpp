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

#include "dermseg/model.hpp"

namespace dermseg {

Ablation Ablation::parse(const std::string& text) {
  if (text == "baseline") return {false, false};
  if (text == "bidfl") return {true, false};
  if (text == "mcdf") return {false, true};
  if (text == "bidfl+mcdf" || text == "full") return {true, true};
  throw ValueError("unknown ablation '" + text +
                   "' (expected baseline, bidfl, mcdf or bidfl+mcdf)");
}

std::string Ablation::name() const {
  if (use_bidfl && use_mcdf) return "bidfl+mcdf";
  if (use_bidfl) return "bidfl";
  if (use_mcdf) return "mcdf";
  return "baseline";
}

void ModelConfig::validate() const {
  backbone.validate();
  if (ablation.use_bidfl) {
    bidfl.validate();
    if (bidfl.in_channels != backbone.reduce_channels) {
      throw ValueError("bidfl input channels (" +
                       std::to_string(bidfl.in_channels) +
                       ") must equal backbone reduce channels (" +
                       std::to_string(backbone.reduce_channels) + ")");
    }
  }
  if (!(sigma_sq > 0.0)) throw ValueError("sigma_sq must be > 0");
}

HeadLayout ModelConfig::head_layout() const {
  return make_head_layout(backbone, ablation.use_bidfl ? &bidfl : nullptr,
                          kNumClasses, windows);
}

ModelConfig desk_model_config() {
  ModelConfig c;
  c.bidfl.rates = {1, 2, 4, 6, 8};
  c.bidfl.in_channels = c.backbone.reduce_channels;
  c.bidfl.bank_channels = c.backbone.reduce_channels;
  return c;
}

ParamSet init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ParamSet params;
  init_backbone_params(config.backbone, rng, params);
  const BidflConfig* bidfl = config.ablation.use_bidfl ? &config.bidfl : nullptr;
  if (bidfl) init_bidfl_params(*bidfl, rng, params);
  init_head_params(config.head_layout(), kNumClasses, bidfl, rng, params);
  return params;
}

ModelOutput model_forward(const ModelConfig& config, const VarMap& params,
                          const Var& image) {
  config.validate();
  const BlockVars blocks = backbone_forward(image, config.backbone, params);
  ModelOutput out;
  const HeadLayout layout = config.head_layout();
  if (config.ablation.use_bidfl) {
    const BidflOutput refined = bidfl_forward(
        blocks.reduced, config.bidfl, bind_bidfl(config.bidfl, params));
    const std::vector<Var> levels = level_maps(refined, params);
    out.stack = score_heads(blocks, &refined.fused, levels, layout, params,
                            config.sigma_sq);
  } else {
    out.stack = score_heads(blocks, nullptr, {}, layout, params, config.sigma_sq);
  }
  out.scores = config.ablation.use_mcdf
                   ? fuse_scores(out.stack, config.stop_alpha_gradient)
                   : sum_fuse(out.stack);
  out.probs = ad::softmax_channels(out.scores);
  return out;
}

Tensor predict_lesion_prob(const ModelConfig& config, const ParamSet& params,
                           const Tensor& image) {
  const ModelOutput out =
      model_forward(config, bind(params, false), constant(image));
  return slice_channels(out.probs.value(), kLesionChannel, 1);
}

Tensor binarize(const Tensor& lesion_prob, double threshold) {
  Tensor mask = lesion_prob;
  for (double& v : mask.data()) v = v > threshold ? 1.0 : 0.0;
  return mask;
}

}  // namespace dermseg
