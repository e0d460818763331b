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

#include <algorithm>
#include <random>
#include <vector>

#include "dermseg/bidfl.hpp"
#include "oracles.hpp"

namespace dermseg {
namespace {

using oracle::random_tensor;
using oracle::Rng;

ConvLayer fixed_layer(const Tensor& kernel, const Tensor& bias) {
  return {constant(kernel), constant(bias), {}};
}

ConvLayer random_reducer(std::size_t c, Rng& rng) {
  return fixed_layer(random_tensor({c, 2 * c, 1, 1}, rng), random_tensor({c}, rng, -0.1, 0.1));
}

/// Random bank of J maps and random reducers, bypassing the convolutions.
struct Chain {
  DilatedBank bank;
  BidflParams params;
};

Chain random_chain(std::size_t levels, std::size_t c, Rng& rng) {
  Chain s;
  for (std::size_t j = 0; j < levels; ++j) {
    s.bank.rates.push_back(j + 1);
    s.bank.maps.push_back(constant(random_tensor({c, 5, 5}, rng)));
  }
  for (std::size_t j = 1; j < levels; ++j) {
    s.params.forward_reducers.push_back(random_reducer(c, rng));
    s.params.backward_reducers.push_back(random_reducer(c, rng));
  }
  return s;
}

Tensor concat2(const Tensor& a, const Tensor& b) {
  Tensor out(Shape{a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.size());
  return out;
}

Tensor clamp_negative(Tensor t) {
  for (double& v : t.data()) v = std::max(v, 0.0);
  return t;
}

Tensor apply_1x1(const ConvLayer& l, const Tensor& x) {
  return clamp_negative(oracle::conv2d(x, l.kernel.value(), l.bias.value(), 1, 1, 0));
}

TEST(DilatedBank, LargeChannelCountKeepsShape) {
  // Five rates on a 512-channel F0; one shared kernel keeps memory modest.
  Rng rng(1);
  const std::vector<std::size_t> rates{3, 6, 12, 18, 24};
  BidflParams p;
  const ConvLayer shared =
      fixed_layer(random_tensor({512, 512, 3, 3}, rng, -0.01, 0.01), Tensor(Shape{512}));
  p.bank.assign(rates.size(), shared);
  const DilatedBank bank =
      dilated_bank(constant(random_tensor({512, 6, 6}, rng)), rates, p);
  ASSERT_EQ(bank.maps.size(), 5u);
  for (const Var& m : bank.maps) EXPECT_EQ(m.shape(), (Shape{512, 6, 6}));
}

TEST(DilatedBank, DeskRatesAndZeroInput) {
  BidflConfig cfg;
  cfg.rates = {1, 2, 4, 6, 8};
  std::mt19937_64 rng(2);
  ParamSet ps;
  init_bidfl_params(cfg, rng, ps);
  const BidflParams p = bind_bidfl(cfg, dermseg::bind(ps, false));
  Rng r(3);
  const DilatedBank bank = dilated_bank(constant(random_tensor({16, 16, 16}, r)), cfg.rates, p);
  for (const Var& m : bank.maps) EXPECT_EQ(m.shape(), (Shape{16, 16, 16}));
  const BidflOutput zero = bidfl_forward(constant(Tensor(Shape{16, 16, 16})), cfg, p);
  for (const Var& m : zero.bank.maps) EXPECT_EQ(m.value(), Tensor(m.shape()));
  for (const Var& m : zero.forward) EXPECT_EQ(m.value(), Tensor(m.shape()));
  for (const Var& m : zero.backward) EXPECT_EQ(m.value(), Tensor(m.shape()));
  EXPECT_EQ(zero.fused.value(), Tensor(zero.fused.shape()));
}

TEST(DilatedBank, Errors) {
  BidflConfig cfg;
  cfg.rates = {1, 2};
  std::mt19937_64 rng(2);
  ParamSet ps;
  init_bidfl_params(cfg, rng, ps);
  const BidflParams p = bind_bidfl(cfg, dermseg::bind(ps, false));
  const std::vector<std::size_t> three{1, 2, 3};
  EXPECT_THROW(dilated_bank(constant(Tensor(Shape{16, 8, 8})), three, p), ValueError);
  EXPECT_THROW(dilated_bank(constant(Tensor(Shape{4, 8, 8})), cfg.rates, p), ShapeError);
}

TEST(BidflConfig, ValidatesRates) {
  BidflConfig cfg;
  cfg.rates = {2, 2, 4};
  EXPECT_THROW(cfg.validate(), ValueError);
  cfg.rates = {4, 2};
  EXPECT_THROW(cfg.validate(), ValueError);
  cfg.rates = {};
  EXPECT_THROW(cfg.validate(), ValueError);
  cfg.rates = {0, 1};
  EXPECT_THROW(cfg.validate(), ValueError);
  cfg.rates = {1, 3, 7};
  EXPECT_NO_THROW(cfg.validate());
}

TEST(DirectionFusion, ParseRoundTrip) {
  for (auto f : {DirectionFusion::kConcatAll, DirectionFusion::kEnds, DirectionFusion::kSum}) {
    EXPECT_EQ(parse_direction_fusion(to_string(f)), f);
  }
  EXPECT_THROW(parse_direction_fusion("mean"), ValueError);
}

TEST(Passes, SingleLevelIsIdentity) {
  Rng rng(4);
  const Chain s = random_chain(1, 3, rng);
  EXPECT_EQ(forward_pass(s.bank, s.params)[0].value(), s.bank.maps[0].value());
  EXPECT_EQ(backward_pass(s.bank, s.params)[0].value(), s.bank.maps[0].value());
}

TEST(Passes, SelectorReducersReproduceBank) {
  const std::size_t c = 3;
  Rng rng(5);
  Chain s = random_chain(4, c, rng);
  for (auto& m : s.bank.maps) m = constant(clamp_negative(m.value()));
  Tensor k(Shape{c, 2 * c, 1, 1});
  for (std::size_t o = 0; o < c; ++o) k[o * 2 * c + c + o] = 1.0;  // pick F_j half
  for (auto& r : s.params.forward_reducers) r = fixed_layer(k, Tensor(Shape{c}));
  for (auto& r : s.params.backward_reducers) r = fixed_layer(k, Tensor(Shape{c}));
  const auto fwd = forward_pass(s.bank, s.params), bwd = backward_pass(s.bank, s.params);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(fwd[j].value(), s.bank.maps[j].value());
    EXPECT_EQ(bwd[j].value(), s.bank.maps[j].value());
  }
}

TEST(Passes, ForwardMatchesHandComposition) {
  Rng rng(6);
  const Chain s = random_chain(3, 2, rng);
  const auto& f = s.bank.maps;
  const auto& r = s.params.forward_reducers;
  const Tensor f2 = apply_1x1(r[0], concat2(f[0].value(), f[1].value()));
  const Tensor f3 = apply_1x1(r[1], concat2(f2, f[2].value()));
  const auto out = forward_pass(s.bank, s.params);
  EXPECT_LT(max_abs_diff(out[1].value(), f2), 1e-12);
  EXPECT_LT(max_abs_diff(out[2].value(), f3), 1e-12);
}

TEST(Passes, BackwardMatchesHandComposition) {
  Rng rng(7);
  const Chain s = random_chain(3, 2, rng);
  const auto& f = s.bank.maps;
  const auto& r = s.params.backward_reducers;
  const Tensor b2 = apply_1x1(r[1], concat2(f[2].value(), f[1].value()));
  const Tensor b1 = apply_1x1(r[0], concat2(b2, f[0].value()));
  const auto out = backward_pass(s.bank, s.params);
  EXPECT_EQ(out[2].value(), f[2].value());
  EXPECT_LT(max_abs_diff(out[1].value(), b2), 1e-12);
  EXPECT_LT(max_abs_diff(out[0].value(), b1), 1e-12);
}

TEST(Passes, BackwardMirrorsForwardOnReversedBank) {
  Rng rng(8);
  for (std::size_t levels : {1u, 2u, 4u}) {
    const Chain s = random_chain(levels, 3, rng);
    Chain mirrored = s;
    std::reverse(mirrored.bank.maps.begin(), mirrored.bank.maps.end());
    mirrored.params.forward_reducers.assign(s.params.backward_reducers.rbegin(),
                                            s.params.backward_reducers.rend());
    const auto bwd = backward_pass(s.bank, s.params);
    const auto fwd = forward_pass(mirrored.bank, mirrored.params);
    for (std::size_t j = 0; j < levels; ++j) {
      EXPECT_EQ(bwd[j].value(), fwd[levels - 1 - j].value()) << levels << " " << j;
    }
  }
}

TEST(Passes, DependencyDirectionIsBitExact) {
  Rng rng(9);
  for (std::size_t levels : {1u, 2u, 3u, 5u}) {
    const Chain s = random_chain(levels, 2, rng);
    const auto fwd = forward_pass(s.bank, s.params), bwd = backward_pass(s.bank, s.params);
    for (std::size_t m = 0; m < levels; ++m) {
      Chain p = s;
      p.bank.maps[m] = constant(random_tensor({2, 5, 5}, rng, -3.0, 3.0));
      const auto pf = forward_pass(p.bank, p.params), pb = backward_pass(p.bank, p.params);
      for (std::size_t j = 0; j < m; ++j) EXPECT_EQ(pf[j].value(), fwd[j].value());
      for (std::size_t j = m + 1; j < levels; ++j) EXPECT_EQ(pb[j].value(), bwd[j].value());
    }
  }
}

TEST(Passes, RejectsWrongReducers) {
  Rng rng(10);
  Chain s = random_chain(3, 2, rng);
  s.params.forward_reducers.pop_back();
  EXPECT_THROW(forward_pass(s.bank, s.params), ShapeError);
  Chain t = random_chain(3, 2, rng);
  t.params.backward_reducers[0] = fixed_layer(Tensor(Shape{2, 3, 1, 1}), Tensor(Shape{2}));
  EXPECT_THROW(backward_pass(t.bank, t.params), ShapeError);
}

TEST(Fuse, AveragingSingleLevelReturnsMap) {
  const std::size_t c = 3;
  Rng rng(11);
  const Var f1 = constant(random_tensor({c, 4, 4}, rng));
  Tensor k(Shape{c, 2 * c, 1, 1});
  for (std::size_t o = 0; o < c; ++o) {
    k[o * 2 * c + o] = 0.5;
    k[o * 2 * c + c + o] = 0.5;
  }
  BidflParams p;
  p.reducer_relu = false;
  p.fuse = fixed_layer(k, Tensor(Shape{c}));
  const Var out = fuse_bidirectional({f1}, {f1}, DirectionFusion::kConcatAll, p);
  EXPECT_LT(max_abs_diff(out.value(), f1.value()), 1e-15);
}

TEST(Fuse, OutputHasBankChannelsForEveryMode) {
  const std::size_t c = 3;
  for (auto mode : {DirectionFusion::kConcatAll, DirectionFusion::kEnds, DirectionFusion::kSum}) {
    for (std::size_t levels = 1; levels <= 5; ++levels) {
      BidflConfig cfg;
      cfg.in_channels = 2;
      cfg.bank_channels = c;
      cfg.fusion = mode;
      cfg.rates.clear();
      for (std::size_t j = 1; j <= levels; ++j) cfg.rates.push_back(j);
      std::mt19937_64 rng(levels);
      ParamSet ps;
      init_bidfl_params(cfg, rng, ps);
      EXPECT_EQ(ps.count("bidfl.fuse.weight"), mode == DirectionFusion::kSum ? 0u : 1u);
      Rng r(levels);
      const BidflOutput o = bidfl_forward(constant(random_tensor({2, 6, 6}, r)), cfg,
                                          bind_bidfl(cfg, dermseg::bind(ps, false)));
      EXPECT_EQ(o.fused.shape(), (Shape{c, 6, 6})) << to_string(mode) << " " << levels;
      EXPECT_EQ(o.forward.size(), levels);
      EXPECT_EQ(o.backward.size(), levels);
    }
  }
}

TEST(Fuse, RejectsMismatchedDirections) {
  BidflParams p;
  const Var a = constant(Tensor(Shape{2, 3, 3})), b = constant(Tensor(Shape{2, 4, 4}));
  EXPECT_THROW(fuse_bidirectional({a}, {a, a}, DirectionFusion::kSum, p), ShapeError);
  EXPECT_THROW(fuse_bidirectional({a}, {b}, DirectionFusion::kSum, p), ShapeError);
  EXPECT_THROW(fuse_bidirectional({}, {}, DirectionFusion::kSum, p), ShapeError);
}

}  // namespace
}  // namespace dermseg
