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

// Deliberately naive reference implementations. None of them share code
// with the library beyond the Tensor container.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "dermseg/tensor.hpp"

namespace dermseg::oracle {

using Rng = std::mt19937_64;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

/// Zero-padded 2-D cross-correlation, one image (C x H x W), by definition.
inline Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b,
                     std::size_t dilation, std::size_t stride, std::size_t pad) {
  const auto C = static_cast<long>(x.dim(0)), H = static_cast<long>(x.dim(1)),
             W = static_cast<long>(x.dim(2));
  const auto O = static_cast<long>(k.dim(0)), KH = static_cast<long>(k.dim(2)),
             KW = static_cast<long>(k.dim(3));
  const auto d = static_cast<long>(dilation), s = static_cast<long>(stride),
             p = static_cast<long>(pad);
  const long OH = (H + 2 * p - d * (KH - 1) - 1) / s + 1;
  const long OW = (W + 2 * p - d * (KW - 1) - 1) / s + 1;
  Tensor out(Shape{static_cast<std::size_t>(O), static_cast<std::size_t>(OH),
                   static_cast<std::size_t>(OW)});
  for (long o = 0; o < O; ++o) {
    for (long oy = 0; oy < OH; ++oy) {
      for (long ox = 0; ox < OW; ++ox) {
        double acc = b[static_cast<std::size_t>(o)];
        for (long c = 0; c < C; ++c) {
          for (long ky = 0; ky < KH; ++ky) {
            for (long kx = 0; kx < KW; ++kx) {
              const long iy = oy * s - p + ky * d;
              const long ix = ox * s - p + kx * d;
              if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
              acc += x[static_cast<std::size_t>((c * H + iy) * W + ix)] *
                     k[static_cast<std::size_t>(((o * C + c) * KH + ky) * KW + kx)];
            }
          }
        }
        out[static_cast<std::size_t>((o * OH + oy) * OW + ox)] = acc;
      }
    }
  }
  return out;
}

/// l x l window centred at (y, x) with coordinates clamped into the map.
inline std::vector<double> window_values(const Tensor& m, std::size_t c, long y, long x,
                                         std::size_t l) {
  const long r = static_cast<long>(l / 2);
  const long H = static_cast<long>(m.dim(1)), W = static_cast<long>(m.dim(2));
  std::vector<double> v;
  for (long dy = -r; dy <= r; ++dy) {
    for (long dx = -r; dx <= r; ++dx) {
      const long yy = std::clamp(y + dy, 0L, H - 1), xx = std::clamp(x + dx, 0L, W - 1);
      v.push_back(m.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)));
    }
  }
  return v;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double population_std(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

/// Per-pixel consistency-weighted fusion of C x H x W score maps:
/// alpha = exp(-std^2 / sigma^2) over each map's own window, then
/// sum_k alpha_k * S_k.
inline Tensor fused_scores(const std::vector<Tensor>& maps,
                           const std::vector<std::size_t>& windows, double sigma_sq) {
  Tensor out(maps.front().shape());
  const std::size_t C = out.dim(0), H = out.dim(1), W = out.dim(2);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < maps.size(); ++k) {
          const double sd = population_std(window_values(
              maps[k], c, static_cast<long>(y), static_cast<long>(x), windows[k]));
          const double alpha = std::exp(-(sd * sd) / sigma_sq);
          acc += alpha * maps[k].at(c, y, x);
        }
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

}  // namespace dermseg::oracle
