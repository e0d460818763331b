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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

#include "dermseg/data_io.hpp"

namespace dermseg {
namespace {

constexpr std::size_t kHarmonics = 3;

// Star-shaped blob: an ellipse whose radius is modulated by low harmonics,
// which yields both convex and concave boundary stretches.
struct Blob {
  double cx = 0.0, cy = 0.0;
  double rel_radius = 1.0;
  double aspect = 1.0;
  double angle = 0.0;
  std::array<double, kHarmonics> amp{};
  std::array<double, kHarmonics> phase{};

  /// rho / boundary radius at (x, y) for global scale s; <= 1 is inside.
  double radial_ratio(double x, double y, double s) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), sn = std::sin(angle);
    const double u = c * dx + sn * dy;
    const double v = (-sn * dx + c * dy) / aspect;
    const double rho = std::hypot(u, v);
    const double theta = std::atan2(v, u);
    double r = 1.0;
    for (std::size_t m = 0; m < kHarmonics; ++m) {
      r += amp[m] * std::sin(static_cast<double>(m + 2) * theta + phase[m]);
    }
    return rho / (s * rel_radius * r);
  }
};

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Blob random_blob(Rng& rng, double size, double rel_radius) {
  Blob b;
  b.cx = uniform(rng, 0.3, 0.7) * size;
  b.cy = uniform(rng, 0.3, 0.7) * size;
  b.rel_radius = rel_radius;
  b.aspect = uniform(rng, 0.6, 1.0);
  b.angle = uniform(rng, 0.0, std::numbers::pi);
  for (std::size_t m = 0; m < kHarmonics; ++m) {
    b.amp[m] = uniform(rng, 0.0, 0.15);
    b.phase[m] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
  return b;
}

// Minimum radial ratio over all blobs at every pixel centre.
std::vector<double> ratio_field(const std::vector<Blob>& blobs, std::size_t size) {
  std::vector<double> field(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (const Blob& b : blobs) {
        best = std::min(best, b.radial_ratio(x + 0.5, y + 0.5, 1.0));
      }
      field[y * size + x] = best;
    }
  }
  return field;
}

// Scale s at which exactly `target` pixels fall inside: the ratio at scale s
// is field / s, so sorting the field gives the threshold directly.
double scale_for_count(std::vector<double> field, std::size_t target) {
  std::sort(field.begin(), field.end());
  if (target == 0) return field.front() * 0.5;
  if (target >= field.size()) return field.back() * 2.0;
  return 0.5 * (field[target - 1] + field[target]);
}

void draw_hair(Tensor& image, Rng& rng, double size) {
  const int strokes = std::uniform_int_distribution<int>(1, 4)(rng);
  for (int s = 0; s < strokes; ++s) {
    const double x0 = uniform(rng, 0.0, size), y0 = uniform(rng, 0.0, size);
    const double x2 = uniform(rng, 0.0, size), y2 = uniform(rng, 0.0, size);
    const double x1 = uniform(rng, 0.0, size), y1 = uniform(rng, 0.0, size);
    const double darkness = uniform(rng, 0.2, 0.45);
    const int steps = static_cast<int>(4 * size);
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      const double a = (1 - t) * (1 - t), b = 2 * (1 - t) * t, c = t * t;
      const auto px = static_cast<std::ptrdiff_t>(a * x0 + b * x1 + c * x2);
      const auto py = static_cast<std::ptrdiff_t>(a * y0 + b * y1 + c * y2);
      if (px < 0 || py < 0 || px >= static_cast<std::ptrdiff_t>(size) ||
          py >= static_cast<std::ptrdiff_t>(size)) {
        continue;
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double& v = image.at(ch, static_cast<std::size_t>(py),
                             static_cast<std::size_t>(px));
        v = std::min(v, darkness * (0.6 + 0.2 * ch));
      }
    }
  }
}

Sample make_sample(const SynthConfig& cfg, Rng& rng, std::size_t index) {
  const std::size_t n = cfg.size;
  const double size = static_cast<double>(n);

  std::vector<Blob> blobs{random_blob(rng, size, 1.0)};
  if (uniform(rng, 0.0, 1.0) < 0.3) {
    blobs.push_back(random_blob(rng, size, uniform(rng, 0.4, 0.8)));
  }
  const double target = uniform(rng, cfg.lesion_fraction_lo, cfg.lesion_fraction_hi);
  const std::vector<double> field = ratio_field(blobs, n);
  const auto count = static_cast<std::size_t>(std::lround(target * n * n));
  const double scale = scale_for_count(field, count);

  const std::array<double, 3> skin{uniform(rng, 0.74, 0.88),
                                   uniform(rng, 0.56, 0.68),
                                   uniform(rng, 0.46, 0.58)};
  const std::array<double, 3> darkening{0.55, 0.7, 0.65};
  const double contrast = uniform(rng, cfg.contrast_lo, cfg.contrast_hi);
  const double grad_x = uniform(rng, -0.06, 0.06);
  const double grad_y = uniform(rng, -0.06, 0.06);
  const double edge_softness = uniform(rng, 0.05, 0.2);
  const double tex_freq = uniform(rng, 0.15, 0.45);
  const double tex_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);

  Sample s{Tensor(Shape{3, n, n}), Tensor(Shape{1, n, n}), {}};
  char id[32];
  std::snprintf(id, sizeof(id), "synth_%04zu", index);
  s.id = id;

  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double ratio = field[y * n + x] / scale;
      s.mask.at(0, y, x) = ratio <= 1.0 ? 1.0 : 0.0;
      // Soft pigment falloff around the exact support.
      const double t = std::clamp((1.0 + edge_softness - ratio) /
                                      (2.0 * edge_softness), 0.0, 1.0);
      const double pigment = t * t * (3.0 - 2.0 * t);
      const double texture =
          1.0 + 0.15 * std::sin(tex_freq * x + tex_phase) * std::cos(tex_freq * y);
      const double light = 1.0 + grad_x * (x / size - 0.5) + grad_y * (y / size - 0.5);
      for (std::size_t c = 0; c < 3; ++c) {
        const double lesion = 1.0 - contrast * darkening[c] * texture;
        s.image.at(c, y, x) = skin[c] * light * (1.0 - pigment + pigment * lesion);
      }
    }
  }
  if (cfg.noise_std > 0.0) {
    for (double& v : s.image.data()) v += cfg.noise_std * noise(rng);
  }
  if (uniform(rng, 0.0, 1.0) < cfg.hair_prob) draw_hair(s.image, rng, size);
  for (double& v : s.image.data()) v = std::clamp(v, 0.0, 1.0);
  return s;
}

}  // namespace

void SynthConfig::validate() const {
  if (count == 0) throw ValueError("synthetic: count must be positive");
  if (size < 4) throw ValueError("synthetic: size must be at least 4");
  if (!(0.0 < lesion_fraction_lo && lesion_fraction_lo < lesion_fraction_hi &&
        lesion_fraction_hi < 1.0)) {
    throw ValueError("synthetic: lesion fraction range must satisfy 0 < lo < hi < 1");
  }
  if (contrast_lo < 0.0 || contrast_hi < contrast_lo || contrast_hi > 1.0) {
    throw ValueError("synthetic: contrast range must satisfy 0 <= lo <= hi <= 1");
  }
  if (noise_std < 0.0) throw ValueError("synthetic: noise std must be >= 0");
  if (hair_prob < 0.0 || hair_prob > 1.0) {
    throw ValueError("synthetic: hair probability must lie in [0, 1]");
  }
}

std::vector<Sample> gen_synthetic(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::vector<Sample> out;
  out.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) {
    out.push_back(make_sample(config, rng, i));
  }
  return out;
}

double lesion_fraction(const Tensor& mask) {
  return sum(mask) / static_cast<double>(mask.size());
}

}  // namespace dermseg
