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

#include "dermseg/backbone.hpp"
#include "oracles.hpp"

namespace dermseg {
namespace {

using oracle::random_tensor;
using oracle::Rng;

TEST(Backbone, DeskShapes) {
  const BackboneConfig cfg;
  Rng rng(1);
  const BlockFeatures f =
      backbone_forward(random_tensor({3, 64, 64}, rng), cfg, init_params(cfg, 5));
  const std::size_t side[] = {64, 32, 16, 16, 16};
  ASSERT_EQ(f.blocks.size(), kNumBlocks);
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    EXPECT_EQ(f.blocks[b].shape(), (Shape{cfg.block_channels[b], side[b], side[b]}));
  }
  EXPECT_EQ(f.reduced.shape(), (Shape{16, 16, 16}));
}

TEST(Backbone, ZeroImageZeroBiasGivesZeroFeatures) {
  const BackboneConfig cfg;
  const BlockFeatures f =
      backbone_forward(Tensor(Shape{3, 32, 32}), cfg, init_params(cfg, 2));
  for (const Tensor& t : f.blocks) EXPECT_EQ(max_abs_diff(t, Tensor(t.shape())), 0.0);
  EXPECT_EQ(max_abs_diff(f.reduced, Tensor(f.reduced.shape())), 0.0);
}

TEST(Backbone, DeterministicForSeed) {
  const BackboneConfig cfg;
  EXPECT_EQ(init_params(cfg, 4), init_params(cfg, 4));
  EXPECT_NE(init_params(cfg, 4), init_params(cfg, 5));
  Rng rng(2);
  const Tensor x = random_tensor({3, 16, 16}, rng);
  const ParamSet p = init_params(cfg, 4);
  const BlockFeatures a = backbone_forward(x, cfg, p), b = backbone_forward(x, cfg, p);
  for (std::size_t i = 0; i < kNumBlocks; ++i) EXPECT_EQ(a.blocks[i], b.blocks[i]);
  EXPECT_EQ(a.reduced, b.reduced);
}

TEST(Backbone, InitScaleOnLargeKernels) {
  BackboneConfig cfg;
  cfg.block_channels = {8, 16, 64, 64, 64};
  const ParamSet p = init_params(cfg, 11);
  const Tensor& w = p.at("backbone.block4.weight");
  double ss = 0.0;
  for (double v : w.data()) ss += v * v;
  const double want = std::sqrt(2.0 / (64.0 * 9.0));
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(w.size())), want, 0.2 * want);
}

TEST(Backbone, RejectsIndivisibleInputAndBadConfigs) {
  const BackboneConfig cfg;
  const ParamSet p = init_params(cfg, 1);
  EXPECT_THROW(backbone_forward(Tensor(Shape{3, 30, 32}), cfg, p), ValueError);
  BackboneConfig short_cfg;
  short_cfg.block_channels = {8, 16, 32, 32};
  EXPECT_THROW(short_cfg.validate(), ValueError);
  BackboneConfig bad_stride;
  bad_stride.block_strides = {1, 3, 2, 1, 1};
  EXPECT_THROW(bad_stride.validate(), ValueError);
}

TEST(Backbone, SpatialChainFollowsRandomStrides) {
  Rng rng(7);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<std::size_t> ch(1, 4);
  for (int trial = 0; trial < 12; ++trial) {
    BackboneConfig cfg;
    cfg.in_channels = 2;
    for (std::size_t b = 0; b < kNumBlocks; ++b) {
      cfg.block_channels[b] = ch(rng);
      cfg.block_strides[b] = coin(rng) ? 2 : 1;
      cfg.block_dilations[b] = coin(rng) ? 2 : 1;
    }
    cfg.reduce_channels = ch(rng);
    const std::size_t side = 2 * cfg.total_stride();
    const BlockFeatures f = backbone_forward(random_tensor({2, side, side}, rng), cfg,
                                             init_params(cfg, 3));
    std::size_t expect = side;
    for (std::size_t b = 0; b < kNumBlocks; ++b) {
      expect /= cfg.block_strides[b];
      EXPECT_EQ(f.blocks[b].shape(), (Shape{cfg.block_channels[b], expect, expect}));
    }
    EXPECT_EQ(f.reduced.shape(), (Shape{cfg.reduce_channels, expect, expect}));
  }
}

TEST(Backbone, BatchedMatchesPerImage) {
  const BackboneConfig cfg;
  const ParamSet p = init_params(cfg, 8);
  Rng rng(4);
  const Tensor a = random_tensor({3, 16, 16}, rng), b = random_tensor({3, 16, 16}, rng);
  Tensor both(Shape{2, 3, 16, 16});
  for (std::size_t i = 0; i < a.size(); ++i) {
    both[i] = a[i];
    both[a.size() + i] = b[i];
  }
  const Tensor fb = backbone_forward(both, cfg, p).reduced;
  const Tensor fa = backbone_forward(a, cfg, p).reduced;
  const Tensor fc = backbone_forward(b, cfg, p).reduced;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    EXPECT_NEAR(fb[i], fa[i], 1e-12);
    EXPECT_NEAR(fb[fa.size() + i], fc[i], 1e-12);
  }
}

}  // namespace
}  // namespace dermseg
