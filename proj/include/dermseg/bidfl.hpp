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

// Bi-directional feature learning over a bank of dilated convolutions.
//
// The bank holds F_1..F_J, one 3x3 convolution of F0 per ascending dilation
// rate. Two chains then refine it without touching spatial resolution:
//
//   forward  (local -> zooming-out):  F'_1  = F_1,
//                                     F'_j  = r_j(concat(F'_{j-1}, F_j))
//   backward (global -> zooming-in):  F''_J = F_J,
//                                     F''_j = r~_j(concat(F''_{j+1}, F_j))
//
// where every r is a 1x1 convolution from 2C back to C channels. The two
// refined sets are merged by fuse_bidirectional.

#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "dermseg/autodiff.hpp"
#include "dermseg/params.hpp"

namespace dermseg {

enum class DirectionFusion {
  /// concat(F'_1..F'_J, F''_1..F''_J) -> 1x1 conv to C channels.
  kConcatAll,
  /// concat(F'_J, F''_1) -> 1x1 conv to C channels.
  kEnds,
  /// Elementwise sum of all 2J refined maps; no parameters.
  kSum,
};

const char* to_string(DirectionFusion f);
DirectionFusion parse_direction_fusion(const std::string& text);

struct BidflConfig {
  /// Strictly ascending dilation rates, one bank map each.
  std::vector<std::size_t> rates{3, 6, 12, 18, 24};
  std::size_t in_channels = 16;    // F0 channels
  std::size_t bank_channels = 16;  // C
  DirectionFusion fusion = DirectionFusion::kConcatAll;
  bool bank_relu = true;
  bool reducer_relu = true;

  void validate() const;
  std::size_t levels() const { return rates.size(); }
};

struct DilatedBank {
  std::vector<std::size_t> rates;
  std::vector<Var> maps;
};

/// Parameters bound for one pass. `forward_reducers[i]` produces F'_{i+2}
/// and `backward_reducers[i]` produces F''_{i+1} (1-based map indices), so
/// both hold J - 1 layers.
struct BidflParams {
  std::vector<ConvLayer> bank;
  std::vector<ConvLayer> forward_reducers;
  std::vector<ConvLayer> backward_reducers;
  ConvLayer fuse;  // unset for DirectionFusion::kSum
  bool bank_relu = true;
  bool reducer_relu = true;
};

void init_bidfl_params(const BidflConfig& config, std::mt19937_64& rng,
                       ParamSet& params);

BidflParams bind_bidfl(const BidflConfig& config, const VarMap& vars);

DilatedBank dilated_bank(const Var& f0, const std::vector<std::size_t>& rates,
                         const BidflParams& params);

std::vector<Var> forward_pass(const DilatedBank& bank, const BidflParams& params);
std::vector<Var> backward_pass(const DilatedBank& bank, const BidflParams& params);

Var fuse_bidirectional(const std::vector<Var>& fwd, const std::vector<Var>& bwd,
                       DirectionFusion fusion, const BidflParams& params);

struct BidflOutput {
  DilatedBank bank;
  std::vector<Var> forward;
  std::vector<Var> backward;
  Var fused;
};

BidflOutput bidfl_forward(const Var& f0, const BidflConfig& config,
                          const BidflParams& params);

}  // namespace dermseg
