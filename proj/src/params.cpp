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

#include "dermseg/params.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dermseg {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string bytes, std::string origin)
      : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++]))
           << (8 * i);
    }
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw IoError(origin_ + ": truncated checkpoint");
    }
  }

  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

VarMap bind(const ParamSet& params, bool trainable) {
  VarMap vars;
  for (const auto& [name, t] : params) {
    vars.emplace(name, trainable ? parameter(t, name) : constant(t));
  }
  return vars;
}

const Var& lookup(const VarMap& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw Error("missing parameter '" + name + "'");
  return it->second;
}

Var ConvLayer::operator()(const Var& x) const {
  return ad::conv2d(x, kernel, bias, geometry);
}

Var ConvLayer::transposed(const Var& x) const {
  return ad::conv_transpose2d(x, kernel, bias, geometry);
}

ConvLayer conv_layer(const VarMap& vars, const std::string& prefix,
                     const ConvGeometry& geometry) {
  return {lookup(vars, prefix + ".weight"), lookup(vars, prefix + ".bias"),
          geometry};
}

void add_he_conv(ParamSet& params, const std::string& prefix, std::size_t out,
                 std::size_t in, std::size_t k, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(in * k * k);
  const double limit = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w(Shape{out, in, k, k});
  for (double& v : w.data()) v = dist(rng);
  params[prefix + ".weight"] = std::move(w);
  params[prefix + ".bias"] = Tensor(Shape{out});
}

void add_zero_conv(ParamSet& params, const std::string& prefix, std::size_t out,
                   std::size_t in, std::size_t k) {
  params[prefix + ".weight"] = Tensor(Shape{out, in, k, k});
  params[prefix + ".bias"] = Tensor(Shape{out});
}

void add_bilinear_upsample(ParamSet& params, const std::string& prefix,
                           std::size_t channels, std::size_t factor) {
  const std::size_t k = 2 * factor;
  const double center = factor - 0.5;
  Tensor w(Shape{channels, channels, k, k});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < k; ++y) {
      for (std::size_t x = 0; x < k; ++x) {
        const double fy = 1.0 - std::abs(static_cast<double>(y) - center) / factor;
        const double fx = 1.0 - std::abs(static_cast<double>(x) - center) / factor;
        w[((c * channels + c) * k + y) * k + x] = fy * fx;
      }
    }
  }
  params[prefix + ".weight"] = std::move(w);
  params[prefix + ".bias"] = Tensor(Shape{channels});
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  static_assert(sizeof(double) == 8);
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.config_text.size()));
  out += ckpt.config_text;
  put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(f), {}), path.string());
  if (r.text(sizeof(kCheckpointMagic)) !=
      std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw IoError(path.string() + ": not a dermseg checkpoint");
  }
  const auto version = r.uint(4);
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " +
                  std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_text = r.text(r.uint(4));
  const auto count = r.uint(4);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.text(r.uint(4));
    Shape shape(r.uint(4));
    for (auto& d : shape) d = r.uint(8);
    Tensor t(shape);
    for (double& v : t.data()) v = std::bit_cast<double>(r.uint(8));
    ckpt.params.emplace(std::move(name), std::move(t));
  }
  if (!r.done()) throw IoError(path.string() + ": trailing bytes in checkpoint");
  return ckpt;
}

}  // namespace dermseg
