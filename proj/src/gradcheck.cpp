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

#include "dermseg/gradcheck.hpp"

#include <random>

#include "dermseg/training.hpp"

namespace dermseg {
namespace {

using Rng = std::mt19937_64;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

// Values in +-[0.1, 1] so no probe crosses a ReLU or max-pool kink.
Tensor kink_free_tensor(Shape shape, Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (double& v : t.data()) {
    if (sign(rng)) v = -v;
  }
  return t;
}

// Fixed random projection to a scalar, so every output element matters.
Var project(const Var& out, Rng& rng) {
  return ad::sum(ad::mul(out, constant(random_tensor(out.shape(), rng))));
}

ParamSet randomized_params(const ModelConfig& config, Rng& rng) {
  ParamSet params = init_model(config, rng());
  std::normal_distribution<double> noise(0.0, 0.3);
  for (auto& [name, t] : params) {
    for (double& v : t.data()) v += noise(rng);
  }
  return params;
}

Tensor one_hot_random(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  Tensor labels(Shape{c, h, w});
  std::uniform_int_distribution<std::size_t> pick(0, c - 1);
  for (std::size_t p = 0; p < h * w; ++p) labels[pick(rng) * h * w + p] = 1.0;
  return labels;
}

}  // namespace

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.backbone.in_channels = 2;
  c.backbone.block_channels = {2, 2, 2, 2, 2};
  c.backbone.block_strides = {1, 2, 1, 1, 1};
  c.backbone.block_dilations = {1, 1, 1, 2, 2};
  c.backbone.reduce_channels = 2;
  c.bidfl.rates = {1, 2};
  c.bidfl.in_channels = 2;
  c.bidfl.bank_channels = 2;
  c.windows = {3, 3, 3, 3, 5, 5, 5};
  return c;
}

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, double eps) {
  Rng rng(seed);
  GradCheckOptions opts;
  opts.eps = eps;
  std::vector<GradCheckCase> cases;
  auto check = [&](const std::string& name, const std::function<Var(const Var&)>& f,
                   const Tensor& input) {
    cases.push_back({name, grad_check(f, input, opts)});
  };

  const Tensor x = random_tensor({2, 8, 8}, rng);
  const Tensor kernel = random_tensor({2, 2, 3, 3}, rng);
  const Tensor bias = random_tensor({2}, rng);
  for (const ConvGeometry g :
       {ConvGeometry{1, 1, 1}, ConvGeometry{2, 1, 2}, ConvGeometry{3, 2, 1}}) {
    const std::string tag = "(d" + std::to_string(g.dilation) + ",s" +
                            std::to_string(g.stride) + ")";
    Rng r = rng;
    check("conv2d.input" + tag, [&, r](const Var& v) mutable {
      Rng rr = r;
      return project(ad::conv2d(v, constant(kernel), constant(bias), g), rr);
    }, x);
    check("conv2d.kernel" + tag, [&, r](const Var& v) mutable {
      Rng rr = r;
      return project(ad::conv2d(constant(x), v, constant(bias), g), rr);
    }, kernel);
    check("conv2d.bias" + tag, [&, r](const Var& v) mutable {
      Rng rr = r;
      return project(ad::conv2d(constant(x), constant(kernel), v, g), rr);
    }, bias);
    rng.discard(1);
  }

  {
    const Tensor small = random_tensor({2, 4, 4}, rng);
    const Tensor up = random_tensor({2, 2, 4, 4}, rng);
    const ConvGeometry g{1, 2, 1};
    const Rng r = rng;
    auto f = [&, r](const Var& in, const Var& k, const Var& b) {
      Rng rr = r;
      return project(ad::conv_transpose2d(in, k, b, g), rr);
    };
    check("conv_transpose2d.input",
          [&](const Var& v) { return f(v, constant(up), constant(bias)); }, small);
    check("conv_transpose2d.kernel",
          [&](const Var& v) { return f(constant(small), v, constant(bias)); }, up);
    check("conv_transpose2d.bias",
          [&](const Var& v) { return f(constant(small), constant(up), v); }, bias);
  }

  const Rng proj = rng;
  auto projected = [proj](const Var& out) {
    Rng rr = proj;
    return project(out, rr);
  };
  const Tensor other = random_tensor({2, 8, 8}, rng);
  check("concat_channels", [&](const Var& v) {
    const Var parts[] = {v, constant(other)};
    return projected(ad::concat_channels(parts));
  }, x);
  check("slice_channels",
        [&](const Var& v) { return projected(ad::slice_channels(v, 1, 1)); }, x);
  const Tensor kinked = kink_free_tensor({2, 8, 8}, rng);
  check("relu", [&](const Var& v) { return projected(ad::relu(v)); }, kinked);
  check("max_pool2d",
        [&](const Var& v) { return projected(ad::max_pool2d(v, 2, 2)); }, x);
  check("softmax_channels",
        [&](const Var& v) { return projected(ad::softmax_channels(v)); }, x);
  for (std::size_t w : {1, 3, 5}) {
    check("windowed_mean(w" + std::to_string(w) + ")",
          [&](const Var& v) { return projected(ad::windowed_mean(v, w)); }, x);
    check("local_variance(w" + std::to_string(w) + ")",
          [&](const Var& v) { return projected(ad::local_variance(v, w)); }, x);
  }
  check("add", [&](const Var& v) { return projected(ad::add(v, constant(other))); }, x);
  check("sub", [&](const Var& v) { return projected(ad::sub(constant(other), v)); }, x);
  check("mul", [&](const Var& v) { return projected(ad::mul(v, ad::exp(v))); }, x);
  check("scale", [&](const Var& v) { return projected(ad::scale(v, -2.5)); }, x);
  check("exp", [&](const Var& v) { return projected(ad::exp(v)); }, x);
  check("sum", [&](const Var& v) { return ad::sum(ad::mul(v, v)); }, x);

  const Tensor labels = one_hot_random(2, 8, 8, rng);
  const double weights[] = {0.8, 0.2};
  const Tensor probs = softmax_channels(x);
  check("weighted_cross_entropy", [&](const Var& v) {
    return ad::weighted_cross_entropy(v, labels, weights);
  }, probs);
  check("softmax+weighted_cross_entropy", [&](const Var& v) {
    return ad::weighted_cross_entropy(ad::softmax_channels(v), labels, weights);
  }, x);

  const Tensor scores = random_tensor({2, 8, 8}, rng, -3.0, 3.0);
  check("consistency(w3)",
        [&](const Var& v) { return projected(consistency(v, 3, 10.0)); }, scores);
  {
    const Tensor s1 = random_tensor({2, 8, 8}, rng, -3.0, 3.0);
    const Tensor s2 = random_tensor({2, 8, 8}, rng, -3.0, 3.0);
    auto stack = [&](const Var& v) {
      return ScoreStack{{v, constant(s1), constant(s2)}, {1, 3, 5}, 10.0};
    };
    check("fuse_scores",
          [&](const Var& v) { return projected(fuse_scores(stack(v))); }, scores);
    check("fuse_scores(stop_gradient)",
          [&](const Var& v) { return projected(fuse_scores(stack(v), true)); }, scores);
    check("sum_fuse", [&](const Var& v) { return projected(sum_fuse(stack(v))); },
          scores);
  }

  const ModelConfig tiny = tiny_model_config();
  const ParamSet params = randomized_params(tiny, rng);
  {
    BidflConfig bc = tiny.bidfl;
    const VarMap vars = bind(params, false);
    const BidflParams bp = bind_bidfl(bc, vars);
    const Tensor f0 = random_tensor({2, 4, 4}, rng);
    check("bidfl", [&](const Var& v) {
      return projected(bidfl_forward(v, bc, bp).fused);
    }, f0);
  }

  const Tensor image = random_tensor({2, 8, 8}, rng, 0.0, 1.0);
  const Tensor image_labels = one_hot_random(2, 8, 8, rng);
  for (const Ablation ab : {Ablation{false, false}, Ablation{true, true}}) {
    ModelConfig cfg = tiny;
    cfg.ablation = ab;
    if (!ab.use_bidfl) cfg.windows = {3, 3, 3, 3, 5};
    const ParamSet p = ab.use_bidfl ? params : randomized_params(cfg, rng);
    auto loss = [&, cfg](const VarMap& vars, const Var& img) {
      const ModelOutput out = model_forward(cfg, vars, img);
      return ad::weighted_cross_entropy(out.probs, image_labels, weights);
    };
    const std::string tag = "pipeline[" + ab.name() + "]";
    check(tag + ".image",
          [&](const Var& v) { return loss(bind(p, false), v); }, image);
    for (const char* name : {"backbone.block1.weight", "backbone.block3.weight",
                             "bidfl.bank2.weight", "bidfl.forward2.weight",
                             "bidfl.backward1.weight", "heads.level1.mix.weight",
                             "heads.top.classify.weight", "heads.block2.upsample.weight"}) {
      if (!p.contains(name)) continue;
      check(tag + "." + name, [&, name](const Var& v) {
        VarMap vars = bind(p, false);
        vars[name] = v;
        return loss(vars, constant(image));
      }, p.at(name));
    }
  }
  return cases;
}

}  // namespace dermseg
