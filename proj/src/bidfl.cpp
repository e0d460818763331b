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

#include "dermseg/bidfl.hpp"

namespace dermseg {
namespace {

std::string indexed(const char* stem, std::size_t j) {
  return std::string("bidfl.") + stem + std::to_string(j);
}

Var reduce(const ConvLayer& layer, const Var& prev, const Var& current,
           bool with_relu) {
  const Var parts[] = {prev, current};
  Var out = layer(ad::concat_channels(parts));
  return with_relu ? ad::relu(out) : out;
}

void check_chain(const DilatedBank& bank, const std::vector<ConvLayer>& reducers,
                 const char* which) {
  if (bank.maps.empty()) throw ShapeError(std::string(which) + ": empty bank");
  if (reducers.size() + 1 != bank.maps.size()) {
    throw ShapeError(std::string(which) + ": " + std::to_string(reducers.size()) +
                     " reducers for a bank of " +
                     std::to_string(bank.maps.size()) + " maps");
  }
  const Shape& s = bank.maps.front().shape();
  for (const Var& m : bank.maps) {
    if (m.shape() != s) {
      throw ShapeError(std::string(which) + ": bank map " + to_string(m.shape()) +
                       " differs from " + to_string(s));
    }
  }
  const std::size_t c = image_dims(bank.maps.front().value(), which).c;
  for (const ConvLayer& r : reducers) {
    const Shape& k = r.kernel.shape();
    if (k[0] != c || k[1] != 2 * c) {
      throw ShapeError(std::string(which) + ": reducer kernel " + to_string(k) +
                       " does not map " + std::to_string(2 * c) + " -> " +
                       std::to_string(c) + " channels");
    }
  }
}

}  // namespace

const char* to_string(DirectionFusion f) {
  switch (f) {
    case DirectionFusion::kConcatAll: return "concat_all";
    case DirectionFusion::kEnds: return "ends";
    case DirectionFusion::kSum: return "sum";
  }
  return "unknown";
}

DirectionFusion parse_direction_fusion(const std::string& text) {
  if (text == "concat_all") return DirectionFusion::kConcatAll;
  if (text == "ends") return DirectionFusion::kEnds;
  if (text == "sum") return DirectionFusion::kSum;
  throw ValueError("unknown direction fusion '" + text +
                   "' (expected concat_all, ends or sum)");
}

void BidflConfig::validate() const {
  if (rates.empty()) throw ValueError("bidfl: at least one dilation rate required");
  for (std::size_t j = 0; j < rates.size(); ++j) {
    if (rates[j] == 0) throw ValueError("bidfl: dilation rates must be >= 1");
    if (j > 0 && rates[j] <= rates[j - 1]) {
      throw ValueError("bidfl: dilation rates must be strictly ascending");
    }
  }
  if (in_channels == 0 || bank_channels == 0) {
    throw ValueError("bidfl: channel counts must be positive");
  }
}

void init_bidfl_params(const BidflConfig& config, std::mt19937_64& rng,
                       ParamSet& params) {
  config.validate();
  const std::size_t c = config.bank_channels;
  const std::size_t levels = config.levels();
  for (std::size_t j = 1; j <= levels; ++j) {
    add_he_conv(params, indexed("bank", j), c, config.in_channels, 3, rng);
  }
  for (std::size_t j = 2; j <= levels; ++j) {
    add_he_conv(params, indexed("forward", j), c, 2 * c, 1, rng);
  }
  for (std::size_t j = 1; j < levels; ++j) {
    add_he_conv(params, indexed("backward", j), c, 2 * c, 1, rng);
  }
  switch (config.fusion) {
    case DirectionFusion::kConcatAll:
      add_he_conv(params, "bidfl.fuse", c, 2 * levels * c, 1, rng);
      break;
    case DirectionFusion::kEnds:
      add_he_conv(params, "bidfl.fuse", c, 2 * c, 1, rng);
      break;
    case DirectionFusion::kSum:
      break;
  }
}

BidflParams bind_bidfl(const BidflConfig& config, const VarMap& vars) {
  config.validate();
  BidflParams p;
  const std::size_t levels = config.levels();
  for (std::size_t j = 1; j <= levels; ++j) {
    p.bank.push_back(conv_layer(vars, indexed("bank", j),
                                ConvGeometry::same(3, config.rates[j - 1])));
  }
  for (std::size_t j = 2; j <= levels; ++j) {
    p.forward_reducers.push_back(conv_layer(vars, indexed("forward", j)));
  }
  for (std::size_t j = 1; j < levels; ++j) {
    p.backward_reducers.push_back(conv_layer(vars, indexed("backward", j)));
  }
  if (config.fusion != DirectionFusion::kSum) {
    p.fuse = conv_layer(vars, "bidfl.fuse");
  }
  p.bank_relu = config.bank_relu;
  p.reducer_relu = config.reducer_relu;
  return p;
}

DilatedBank dilated_bank(const Var& f0, const std::vector<std::size_t>& rates,
                         const BidflParams& params) {
  if (rates.size() != params.bank.size()) {
    throw ValueError("dilated_bank: " + std::to_string(rates.size()) +
                     " rates but " + std::to_string(params.bank.size()) +
                     " bank convolutions");
  }
  const std::size_t in = image_dims(f0.value(), "dilated_bank").c;
  DilatedBank bank{rates, {}};
  for (std::size_t j = 0; j < rates.size(); ++j) {
    ConvLayer layer = params.bank[j];
    if (layer.kernel.shape()[1] != in) {
      throw ShapeError("dilated_bank: F0 has " + std::to_string(in) +
                       " channels but bank kernel expects " +
                       std::to_string(layer.kernel.shape()[1]));
    }
    layer.geometry = ConvGeometry::same(layer.kernel.shape()[2], rates[j]);
    Var f = layer(f0);
    bank.maps.push_back(params.bank_relu ? ad::relu(f) : f);
  }
  return bank;
}

std::vector<Var> forward_pass(const DilatedBank& bank, const BidflParams& params) {
  check_chain(bank, params.forward_reducers, "forward_pass");
  std::vector<Var> out{bank.maps.front()};
  for (std::size_t j = 1; j < bank.maps.size(); ++j) {
    out.push_back(reduce(params.forward_reducers[j - 1], out.back(),
                         bank.maps[j], params.reducer_relu));
  }
  return out;
}

std::vector<Var> backward_pass(const DilatedBank& bank, const BidflParams& params) {
  check_chain(bank, params.backward_reducers, "backward_pass");
  const std::size_t levels = bank.maps.size();
  std::vector<Var> out(levels);
  out[levels - 1] = bank.maps.back();
  for (std::size_t j = levels - 1; j-- > 0;) {
    out[j] = reduce(params.backward_reducers[j], out[j + 1], bank.maps[j],
                    params.reducer_relu);
  }
  return out;
}

Var fuse_bidirectional(const std::vector<Var>& fwd, const std::vector<Var>& bwd,
                       DirectionFusion fusion, const BidflParams& params) {
  if (fwd.empty() || fwd.size() != bwd.size()) {
    throw ShapeError("fuse_bidirectional: direction lengths " +
                     std::to_string(fwd.size()) + " and " +
                     std::to_string(bwd.size()) + " differ or are empty");
  }
  for (std::size_t j = 0; j < fwd.size(); ++j) {
    if (fwd[j].shape() != fwd.front().shape() ||
        bwd[j].shape() != fwd.front().shape()) {
      throw ShapeError("fuse_bidirectional: refined map shapes differ at level " +
                       std::to_string(j + 1));
    }
  }
  if (fusion == DirectionFusion::kSum) {
    Var acc = fwd.front();
    for (std::size_t j = 1; j < fwd.size(); ++j) acc = ad::add(acc, fwd[j]);
    for (const Var& b : bwd) acc = ad::add(acc, b);
    return acc;
  }
  std::vector<Var> parts;
  if (fusion == DirectionFusion::kConcatAll) {
    parts = fwd;
    parts.insert(parts.end(), bwd.begin(), bwd.end());
  } else {
    parts = {fwd.back(), bwd.front()};
  }
  if (!params.fuse.kernel) {
    throw ValueError("fuse_bidirectional: no fuse reducer bound");
  }
  Var out = params.fuse(ad::concat_channels(parts));
  return params.reducer_relu ? ad::relu(out) : out;
}

BidflOutput bidfl_forward(const Var& f0, const BidflConfig& config,
                          const BidflParams& params) {
  BidflOutput out;
  out.bank = dilated_bank(f0, config.rates, params);
  out.forward = forward_pass(out.bank, params);
  out.backward = backward_pass(out.bank, params);
  out.fused = fuse_bidirectional(out.forward, out.backward, config.fusion, params);
  return out;
}

}  // namespace dermseg
