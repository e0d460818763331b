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
#include <vector>

#include "dermseg/gradcheck.hpp"
#include "dermseg/mcdf.hpp"
#include "oracles.hpp"

namespace dermseg {
namespace {

using oracle::random_tensor;
using oracle::Rng;

std::vector<Var> constants(const std::vector<Tensor>& maps) {
  std::vector<Var> v;
  for (const Tensor& t : maps) v.push_back(constant(t));
  return v;
}

TEST(WindowSchedule, PaperAndAblationLayouts) {
  EXPECT_EQ(default_window_schedule(10),
            (std::vector<std::size_t>{3, 3, 3, 5, 7, 9, 11, 13, 15, 17}));
  BidflConfig bidfl;
  bidfl.rates = {3, 6, 12, 18, 24};
  const BackboneConfig backbone;
  const HeadLayout full = make_head_layout(backbone, &bidfl, 2);
  ASSERT_EQ(full.size(), 10u);
  const char* names[] = {"block1", "block2", "block3", "block4", "top",
                         "level1", "level2", "level3", "level4", "level5"};
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_EQ(full[k].name, names[k]);
    EXPECT_EQ(full[k].window, default_window_schedule(10)[k]);
    EXPECT_EQ(full[k].factor, backbone.cumulative_stride(std::min<std::size_t>(k, 4)));
  }
  const HeadLayout plain = make_head_layout(backbone, nullptr, 2);
  ASSERT_EQ(plain.size(), 5u);
  EXPECT_EQ(plain[4].in_channels, backbone.block_channels[4]);
  EXPECT_THROW(make_head_layout(backbone, nullptr, 2, {3, 3, 3}), ValueError);
  EXPECT_THROW(make_head_layout(backbone, nullptr, 2, {3, 3, 3, 4, 5}), ValueError);
}

TEST(ScoreHeads, FourHeadsReachLabelResolution) {
  const BackboneConfig backbone;
  HeadLayout layout = make_head_layout(backbone, nullptr, 2);
  layout.resize(4);
  std::mt19937_64 rng(1);
  ParamSet ps;
  init_params(backbone, 1).swap(ps);
  init_head_params(layout, 2, nullptr, rng, ps);
  Rng r(2);
  ps.at("heads.block3.classify.weight") = random_tensor({2, 32, 1, 1}, r);
  const VarMap vars = dermseg::bind(ps, false);
  const BlockVars blocks =
      backbone_forward(constant(random_tensor({3, 64, 64}, r)), backbone, vars);
  const ScoreStack s = score_heads(blocks, nullptr, {}, layout, vars, 10.0);
  ASSERT_EQ(s.maps.size(), 4u);
  for (const Var& m : s.maps) EXPECT_EQ(m.shape(), (Shape{2, 64, 64}));
  // Zero-initialised score layers give zero scores until trained.
  EXPECT_EQ(s.maps[0].value(), Tensor(Shape{2, 64, 64}));
  EXPECT_GT(max_abs_diff(s.maps[2].value(), Tensor(Shape{2, 64, 64})), 0.0);
}

TEST(ScoreHeads, ZeroFeaturesGiveZeroScores) {
  const BackboneConfig backbone;
  const HeadLayout layout = make_head_layout(backbone, nullptr, 2);
  std::mt19937_64 rng(3);
  ParamSet ps = init_params(backbone, 3);
  init_head_params(layout, 2, nullptr, rng, ps);
  const VarMap vars = dermseg::bind(ps, false);
  const BlockVars blocks =
      backbone_forward(constant(Tensor(Shape{3, 32, 32})), backbone, vars);
  for (const Var& m : score_heads(blocks, nullptr, {}, layout, vars, 10.0).maps) {
    EXPECT_EQ(m.value(), Tensor(m.shape()));
  }
}

TEST(LocalStd, Examples) {
  EXPECT_EQ(local_std(Tensor(Shape{1, 5, 5}, 2.5), 3), Tensor(Shape{1, 5, 5}));
  Rng rng(4);
  const Tensor x = random_tensor({2, 5, 5}, rng);
  EXPECT_EQ(local_std(x, 1), Tensor(x.shape()));
  // Centre window {0,2,0,2,0,2,0,2,1}: mean 1, eight squared deviations of 1
  // and one of 0.
  Tensor m(Shape{1, 3, 3});
  const double v[] = {0, 2, 0, 2, 0, 2, 0, 2, 1};
  for (std::size_t i = 0; i < 9; ++i) m[i] = v[i];
  EXPECT_NEAR(local_std(m, 3).at(0, 1, 1), std::sqrt(8.0 / 9.0), 1e-15);
  EXPECT_THROW(local_std(x, 2), ValueError);
}

TEST(LocalStd, MatchesDefinitionWithClampedEdges) {
  Rng rng(12);
  const Tensor m = random_tensor({2, 6, 5}, rng, -2.0, 2.0);
  for (std::size_t w : {1u, 3u, 5u}) {
    const Tensor s = local_std(m, w);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t y = 0; y < 6; ++y) {
        for (std::size_t x = 0; x < 5; ++x) {
          EXPECT_NEAR(s.at(c, y, x),
                      oracle::population_std(oracle::window_values(
                          m, c, static_cast<long>(y), static_cast<long>(x), w)),
                      1e-12);
        }
      }
    }
  }
}

TEST(Consistency, Coefficient) {
  EXPECT_EQ(consistency_coeff(Tensor(Shape{1}, 0.0), 10.0).item(), 1.0);
  EXPECT_NEAR(consistency_coeff(Tensor(Shape{1}, std::sqrt(10.0)), 10.0).item(),
              0.367879441171442, 1e-14);
  double prev = 1.0;
  for (double s = 0.5; s < 40.0; s *= 1.7) {
    const double a = consistency_coeff(Tensor(Shape{1}, s), 10.0).item();
    EXPECT_LT(a, prev);
    EXPECT_GE(a, 0.0);
    prev = a;
  }
  EXPECT_LT(prev, 1e-6);
  EXPECT_THROW(consistency_coeff(Tensor(Shape{1}), 0.0), ValueError);
  EXPECT_THROW(consistency_coeff(Tensor(Shape{1}), -1.0), ValueError);
}

TEST(Consistency, InUnitIntervalAndOneWhereConstant) {
  Rng rng(5);
  Tensor s = random_tensor({2, 8, 8}, rng, -4.0, 4.0);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) s.at(1, y, x) = 1.25;  // constant corner
  }
  const Tensor a = consistency(constant(s), 3, 10.0).value();
  for (double v : a.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  for (std::size_t y = 0; y < 3; ++y) {
    for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(a.at(1, y, x), 1.0);
  }
}

TEST(Consistency, MatchesStdBasedForm) {
  Rng rng(6);
  const Tensor s = random_tensor({2, 7, 7}, rng, -2.0, 2.0);
  for (std::size_t w : {1u, 3u, 5u}) {
    EXPECT_LT(max_abs_diff(consistency(constant(s), w, 10.0).value(),
                           consistency_coeff(local_std(s, w), 10.0)),
              1e-14);
  }
}

TEST(FuseScores, MatchesScalarOracleExhaustively) {
  Rng rng(7);
  std::uniform_int_distribution<std::size_t> kdist(1, 4), side(5, 16), widx(0, 2);
  const std::size_t wins[] = {1, 3, 5};
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = kdist(rng), h = side(rng), w = side(rng);
    std::vector<Tensor> maps;
    std::vector<std::size_t> windows;
    for (std::size_t i = 0; i < k; ++i) {
      maps.push_back(random_tensor({2, h, w}, rng, -3.0, 3.0));
      windows.push_back(wins[widx(rng)]);
    }
    const ScoreStack stack{constants(maps), windows, 10.0};
    EXPECT_LT(max_abs_diff(fuse_scores(stack).value(),
                           oracle::fused_scores(maps, windows, 10.0)),
              1e-9);
  }
}

TEST(FuseScores, SingleConstantMapIsUnchanged) {
  const Tensor s(Shape{2, 6, 6}, -0.75);
  EXPECT_EQ(fuse_scores(ScoreStack{{constant(s)}, {5}, 10.0}).value(), s);
}

TEST(FuseScores, HugeSigmaApproachesSum) {
  Rng rng(8);
  std::vector<Tensor> maps;
  for (int i = 0; i < 3; ++i) maps.push_back(random_tensor({2, 9, 9}, rng, 0.5, 2.0));
  const ScoreStack stack{constants(maps), {3, 5, 7}, 1e12};
  const Tensor f = fuse_scores(stack).value(), s = sum_fuse(stack).value();
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_LE(std::abs(f[i] - s[i]), 1e-6 * std::abs(s[i]));
  }
}

TEST(SumFuse, IdentityAndCancellation) {
  Rng rng(9);
  const Tensor a = random_tensor({2, 4, 4}, rng);
  EXPECT_EQ(sum_fuse(ScoreStack{{constant(a)}, {1}, 10.0}).value(), a);
  EXPECT_EQ(sum_fuse(ScoreStack{{constant(a), constant(a * -1.0)}, {1, 1}, 10.0}).value(),
            Tensor(a.shape()));
  EXPECT_THROW(sum_fuse(ScoreStack{}), ShapeError);
}

TEST(ScoreStack, Validation) {
  const Var a = constant(Tensor(Shape{2, 4, 4})), b = constant(Tensor(Shape{2, 5, 4}));
  EXPECT_THROW(fuse_scores(ScoreStack{{a, b}, {3, 3}, 10.0}), ShapeError);
  EXPECT_THROW(fuse_scores(ScoreStack{{a}, {3, 3}, 10.0}), ValueError);
  EXPECT_THROW(fuse_scores(ScoreStack{{a}, {5}, 10.0}), ValueError);
  EXPECT_THROW(fuse_scores(ScoreStack{{a}, {2}, 10.0}), ValueError);
  EXPECT_THROW(fuse_scores(ScoreStack{{a}, {3}, 0.0}), ValueError);
}

TEST(FuseScores, GradientPassesFiniteDifferences) {
  Rng rng(10);
  const std::vector<Tensor> others{random_tensor({2, 6, 6}, rng, -2, 2),
                                   random_tensor({2, 6, 6}, rng, -2, 2)};
  const Tensor weights = random_tensor({2, 6, 6}, rng);
  for (std::size_t slot = 0; slot < 3; ++slot) {
    const auto r = grad_check(
        [&](const Var& v) {
          std::vector<Var> maps = constants(others);
          maps.insert(maps.begin() + static_cast<long>(slot), v);
          return ad::sum(ad::mul(fuse_scores(ScoreStack{maps, {3, 5, 3}, 10.0}),
                                 constant(weights)));
        },
        random_tensor({2, 6, 6}, rng, -2, 2));
    EXPECT_LT(r.max_relative_error, 1e-4) << slot;
  }
}

TEST(FuseScores, StopGradientTreatsAlphaAsConstant) {
  Rng rng(11);
  const Tensor s0 = random_tensor({2, 5, 5}, rng);
  const Var s = parameter(s0);
  const Var wrt[] = {s};
  const Tensor g = gradients(ad::sum(fuse_scores(ScoreStack{{s}, {3}, 10.0}, true)), wrt)[0];
  // d/dS sum(alpha * S) with alpha frozen is alpha itself.
  EXPECT_LT(max_abs_diff(g, consistency_coeff(local_std(s0, 3), 10.0)), 1e-14);
  const Tensor full = gradients(ad::sum(fuse_scores(ScoreStack{{s}, {3}, 10.0})), wrt)[0];
  EXPECT_GT(max_abs_diff(full, g), 1e-6);
}

}  // namespace
}  // namespace dermseg
