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

#include "dermseg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace dermseg {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ValueError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ValueError("config: '" + key + "' expects a non-negative integer, got '" +
                     v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValueError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(parse_uint(key, item));
  return out;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(parse_double(key, item));
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct KeyDef {
  ConfigKey doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define DS_SIZE(field) \
  [](RunConfig& c, const std::string& v) { c.field = parse_uint(#field, v); }, \
  [](const RunConfig& c) { return std::to_string(c.field); }
#define DS_DOUBLE(field) \
  [](RunConfig& c, const std::string& v) { c.field = parse_double(#field, v); }, \
  [](const RunConfig& c) { return fmt(c.field); }
#define DS_BOOL(field) \
  [](RunConfig& c, const std::string& v) { c.field = parse_bool(#field, v); }, \
  [](const RunConfig& c) { return fmt_bool(c.field); }
#define DS_SIZES(field) \
  [](RunConfig& c, const std::string& v) { c.field = parse_sizes(#field, v); }, \
  [](const RunConfig& c) { return join(c.field); }

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      {{"seed", "training seed (init, sampling, augmentation)"}, DS_SIZE(train.seed)},
      {{"base_lr", "poly policy base learning rate"}, DS_DOUBLE(train.base_lr)},
      {{"power", "poly policy power"}, DS_DOUBLE(train.power)},
      {{"max_iter", "training iterations"}, DS_SIZE(train.max_iter)},
      {{"class_weights", "loss weights: lesion,background"},
       [](RunConfig& c, const std::string& v) {
         c.train.class_weights = parse_doubles("class_weights", v);
       },
       [](const RunConfig& c) { return join(c.train.class_weights); }},
      {{"batch_size", "images per SGD step"}, DS_SIZE(train.batch_size)},
      {{"momentum", "SGD momentum, 0 for plain SGD"}, DS_DOUBLE(train.momentum)},
      {{"augment", "random flips and scaling"}, DS_BOOL(train.augment)},
      {{"use_bidfl", "bi-directional feature learning"},
       DS_BOOL(model.ablation.use_bidfl)},
      {{"use_mcdf", "consistency-weighted fusion (otherwise plain sum)"},
       DS_BOOL(model.ablation.use_mcdf)},
      {{"sigma_sq", "fusion Gaussian width"}, DS_DOUBLE(model.sigma_sq)},
      {{"windows", "fusion window per head, empty for 3,3,3,5,7,..."},
       DS_SIZES(model.windows)},
      {{"stop_alpha_gradient", "treat fusion weights as constants"},
       DS_BOOL(model.stop_alpha_gradient)},
      {{"block_channels", "backbone channels per block"},
       DS_SIZES(model.backbone.block_channels)},
      {{"block_strides", "backbone stride per block (1 or 2)"},
       DS_SIZES(model.backbone.block_strides)},
      {{"block_dilations", "backbone dilation per block"},
       DS_SIZES(model.backbone.block_dilations)},
      {{"reduce_channels", "channels of F0 and of every bank map"},
       [](RunConfig& c, const std::string& v) {
         const std::size_t n = parse_uint("reduce_channels", v);
         c.model.backbone.reduce_channels = n;
         c.model.bidfl.in_channels = n;
         c.model.bidfl.bank_channels = n;
       },
       [](const RunConfig& c) { return std::to_string(c.model.backbone.reduce_channels); }},
      {{"rates", "dilation rates of the context bank"}, DS_SIZES(model.bidfl.rates)},
      {{"direction_fusion", "concat_all, ends or sum"},
       [](RunConfig& c, const std::string& v) {
         c.model.bidfl.fusion = parse_direction_fusion(v);
       },
       [](const RunConfig& c) { return std::string(to_string(c.model.bidfl.fusion)); }},
      {{"bank_relu", "ReLU after each bank convolution"}, DS_BOOL(model.bidfl.bank_relu)},
      {{"reducer_relu", "ReLU after each 2C->C reducer"},
       DS_BOOL(model.bidfl.reducer_relu)},
      {{"image_size", "square input size"}, DS_SIZE(synth.size)},
      {{"synth_count", "synthetic images"}, DS_SIZE(synth.count)},
      {{"synth_seed", "synthetic generator seed"}, DS_SIZE(synth.seed)},
      {{"lesion_fraction_lo", "min lesion pixel fraction"},
       DS_DOUBLE(synth.lesion_fraction_lo)},
      {{"lesion_fraction_hi", "max lesion pixel fraction"},
       DS_DOUBLE(synth.lesion_fraction_hi)},
      {{"contrast_lo", "min lesion contrast"}, DS_DOUBLE(synth.contrast_lo)},
      {{"contrast_hi", "max lesion contrast"}, DS_DOUBLE(synth.contrast_hi)},
      {{"noise_std", "additive Gaussian noise"}, DS_DOUBLE(synth.noise_std)},
      {{"hair_prob", "probability of hair strokes"}, DS_DOUBLE(synth.hair_prob)},
      {{"val_fraction", "held-out fraction"}, DS_DOUBLE(val_fraction)},
      {{"split_seed", "train/val shuffle seed"}, DS_SIZE(split_seed)},
  };
  return defs;
}

#undef DS_SIZE
#undef DS_DOUBLE
#undef DS_BOOL
#undef DS_SIZES

}  // namespace

RunConfig::RunConfig() {
  model = desk_model_config();
  model.bidfl.rates = BidflConfig{}.rates;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  synth.validate();
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ValueError("config: val_fraction must lie in [0, 1)");
  }
  if (synth.size % model.backbone.total_stride() != 0) {
    throw ValueError("config: image_size must be divisible by the backbone stride " +
                     std::to_string(model.backbone.total_stride()));
  }
}

void RunConfig::apply(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ValueError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& defs = key_defs();
    auto it = std::find_if(defs.begin(), defs.end(),
                           [&](const KeyDef& d) { return d.doc.name == key; });
    if (it == defs.end()) throw ValueError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ValueError(where + "repeated key '" + key + "'");
    try {
      it->set(*this, value);
    } catch (const ValueError& e) {
      throw ValueError(where + e.what());
    }
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const KeyDef& d : key_defs()) out += d.doc.name + " = " + d.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  c.apply(text);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const KeyDef& d : key_defs()) out.push_back(d.doc);
    return out;
  }();
  return keys;
}

}  // namespace dermseg
