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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dermseg/model.hpp"
#include "oracles.hpp"

namespace dermseg {
namespace {

using oracle::random_tensor;
using oracle::Rng;

ModelConfig config_for(const char* ablation) {
  ModelConfig c = desk_model_config();
  c.ablation = Ablation::parse(ablation);
  return c;
}

/// Initial parameters plus noise so that every head contributes.
ParamSet perturbed(const ModelConfig& c, std::uint64_t seed) {
  ParamSet p = init_model(c, seed);
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (auto& [name, t] : p) {
    for (double& v : t.data()) v += noise(rng);
  }
  return p;
}

TEST(Ablation, ParseAndName) {
  for (const char* n : {"baseline", "bidfl", "mcdf", "bidfl+mcdf"}) {
    EXPECT_EQ(Ablation::parse(n).name(), n);
  }
  EXPECT_EQ(Ablation::parse("full"), (Ablation{true, true}));
  EXPECT_THROW(Ablation::parse("both"), ValueError);
}

TEST(Model, ConfigValidation) {
  EXPECT_NO_THROW(desk_model_config().validate());
  ModelConfig c = desk_model_config();
  c.bidfl.in_channels = 8;
  EXPECT_THROW(c.validate(), ValueError);
  c.ablation.use_bidfl = false;
  EXPECT_NO_THROW(c.validate());
  c.sigma_sq = 0.0;
  EXPECT_THROW(c.validate(), ValueError);
}

TEST(Model, HeadCountPerAblation) {
  EXPECT_EQ(config_for("bidfl+mcdf").head_layout().size(), 10u);
  EXPECT_EQ(config_for("bidfl").head_layout().size(), 10u);
  EXPECT_EQ(config_for("mcdf").head_layout().size(), 5u);
  EXPECT_EQ(config_for("baseline").head_layout().size(), 5u);
  EXPECT_EQ(init_model(config_for("baseline"), 1).count("bidfl.bank1.weight"), 0u);
  EXPECT_EQ(init_model(config_for("bidfl"), 1).count("bidfl.bank1.weight"), 1u);
}

TEST(Model, ForwardShapesAndProbabilities) {
  Rng rng(1);
  const Tensor image = random_tensor({3, 64, 64}, rng, 0.0, 1.0);
  for (const char* a : {"baseline", "bidfl", "mcdf", "bidfl+mcdf"}) {
    const ModelConfig c = config_for(a);
    const ModelOutput out = model_forward(c, dermseg::bind(perturbed(c, 2), false), constant(image));
    EXPECT_EQ(out.stack.maps.size(), c.head_layout().size()) << a;
    EXPECT_EQ(out.scores.shape(), (Shape{2, 64, 64})) << a;
    const Tensor& p = out.probs.value();
    for (std::size_t i = 0; i < 64 * 64; ++i) {
      EXPECT_NEAR(p[i] + p[64 * 64 + i], 1.0, 1e-12);
      EXPECT_GE(p[i], 0.0);
    }
    const Tensor expected = c.ablation.use_mcdf ? fuse_scores(out.stack).value()
                                                : sum_fuse(out.stack).value();
    EXPECT_EQ(out.scores.value(), expected) << a;
  }
}

TEST(Model, InitialPredictionIsUniform) {
  const ModelConfig c = desk_model_config();
  Rng rng(3);
  const Tensor p =
      predict_lesion_prob(c, init_model(c, 3), random_tensor({3, 32, 32}, rng, 0.0, 1.0));
  EXPECT_EQ(p.shape(), (Shape{1, 32, 32}));
  for (double v : p.data()) EXPECT_EQ(v, 0.5);
}

TEST(Model, BatchedMatchesPerImage) {
  const ModelConfig c = desk_model_config();
  const ParamSet params = perturbed(c, 4);
  Rng rng(4);
  const Tensor a = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
  const Tensor b = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
  Tensor both(Shape{2, 3, 32, 32});
  std::copy(a.data().begin(), a.data().end(), both.data().begin());
  std::copy(b.data().begin(), b.data().end(), both.data().begin() + a.size());
  const Tensor pb = predict_lesion_prob(c, params, both);
  ASSERT_EQ(pb.shape(), (Shape{2, 1, 32, 32}));
  const Tensor pa = predict_lesion_prob(c, params, a), pc = predict_lesion_prob(c, params, b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_NEAR(pb[i], pa[i], 1e-12);
    EXPECT_NEAR(pb[pa.size() + i], pc[i], 1e-12);
  }
}

TEST(Model, BaselineLeavesReductionUntouched) {
  const ModelConfig c = config_for("baseline");
  const VarMap vars = dermseg::bind(perturbed(c, 5), true);
  Rng rng(5);
  const ModelOutput out =
      model_forward(c, vars, constant(random_tensor({3, 32, 32}, rng, 0.0, 1.0)));
  const Var wrt[] = {lookup(vars, "backbone.reduce.weight"),
                     lookup(vars, "heads.top.classify.weight")};
  const auto g = gradients(ad::sum(ad::mul(out.scores, out.scores)), wrt);
  EXPECT_EQ(g[0], Tensor(g[0].shape()));
  EXPECT_GT(max_abs_diff(g[1], Tensor(g[1].shape())), 0.0);
}

TEST(Model, Binarize) {
  const Tensor p(Shape{4}, std::vector<double>{0.0, 0.5, 0.5000001, 1.0});
  EXPECT_EQ(binarize(p).vec(), (std::vector<double>{0, 0, 1, 1}));
  EXPECT_EQ(binarize(p, 0.9).vec(), (std::vector<double>{0, 0, 0, 1}));
}

}  // namespace
}  // namespace dermseg
