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
#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "dermseg/autodiff.hpp"
#include "dermseg/tensor.hpp"

namespace dermseg {

/// Named parameter tensors, ordered by name so iteration (and therefore
/// checkpoints and updates) is deterministic.
using ParamSet = std::map<std::string, Tensor>;

/// Graph leaves bound to a ParamSet for one forward/backward pass.
using VarMap = std::map<std::string, Var>;

VarMap bind(const ParamSet& params, bool trainable);

/// Throws Error naming the missing key.
const Var& lookup(const VarMap& vars, const std::string& name);

/// A convolution whose kernel and bias are graph nodes.
struct ConvLayer {
  Var kernel;
  Var bias;
  ConvGeometry geometry;

  Var operator()(const Var& x) const;
  Var transposed(const Var& x) const;
};

ConvLayer conv_layer(const VarMap& vars, const std::string& prefix,
                     const ConvGeometry& geometry = {});

/// Adds `<prefix>.weight` (out x in x k x k), drawn uniformly from
/// [-a, a] with a = sqrt(6 / fan_in) so the standard deviation is
/// sqrt(2 / fan_in), and a zero `<prefix>.bias`.
void add_he_conv(ParamSet& params, const std::string& prefix, std::size_t out,
                 std::size_t in, std::size_t k, std::mt19937_64& rng);

/// All-zero weight and bias.
void add_zero_conv(ParamSet& params, const std::string& prefix, std::size_t out,
                   std::size_t in, std::size_t k);

/// Transposed-convolution kernel that performs bilinear upsampling of each
/// channel independently by `factor`, with a zero bias.
void add_bilinear_upsample(ParamSet& params, const std::string& prefix,
                           std::size_t channels, std::size_t factor);

// Checkpoint layout, all integers little-endian:
//   8 bytes   magic "DSEGCKPT"
//   u32       format version (1)
//   u32, ...  config echo: byte length, then key=value text
//   u32       record count
//   records:  u32 name length, name bytes, u32 rank, rank x u64 dims,
//             product(dims) x f64 (IEEE-754 binary64)
struct Checkpoint {
  std::string config_text;
  ParamSet params;
};

inline constexpr char kCheckpointMagic[8] = {'D', 'S', 'E', 'G',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace dermseg
