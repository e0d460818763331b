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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dermseg/tensor.hpp"

namespace dermseg {

/// image is 3 x H x W in [0, 1]; mask is 1 x H x W with values {0, 1}.
struct Sample {
  Tensor image;
  Tensor mask;
  std::string id;
};

struct SynthConfig {
  std::size_t count = 200;
  std::size_t size = 64;
  std::uint64_t seed = 7;
  double lesion_fraction_lo = 0.05;
  double lesion_fraction_hi = 0.4;
  double contrast_lo = 0.25;
  double contrast_hi = 0.6;
  double noise_std = 0.05;
  double hair_prob = 0.3;

  void validate() const;
};

/// Skin-like background with one or two perturbed-ellipse lesions, additive
/// Gaussian noise and optional dark hair strokes. Each mask is the exact
/// lesion support with a fraction drawn from the configured range.
std::vector<Sample> gen_synthetic(const SynthConfig& config);

/// Fraction of mask pixels equal to 1.
double lesion_fraction(const Tensor& mask);

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

/// Seeded shuffle, then the first round((1 - val_fraction) n) go to train.
Split split_dataset(std::vector<Sample> samples, double val_fraction,
                    std::uint64_t seed);

// Image files. Extension picks the codec: .ppm/.pgm always, .png when the
// build found libpng (has_png_support()).

bool has_png_support();

/// Reads an 8-bit image as C x H x W in [0, 1] (C = 1 or 3).
Tensor read_image(const std::filesystem::path& path);

/// Writes 1- or 3-channel data, clamped to [0, 1] then quantised to 8 bits.
void write_image(const Tensor& image, const std::filesystem::path& path);

/// Mask as single-channel 8-bit, 0 / 255.
void write_mask(const Tensor& mask, const std::filesystem::path& path);

/// Reads a single-channel mask, binarised at 128.
Tensor read_mask(const std::filesystem::path& path);

/// <dir>/images/<id>.ppm and <dir>/masks/<id>.pgm.
void write_sample(const Sample& sample, const std::filesystem::path& dir);

/// Writes every sample plus <dir>/manifest.txt ("<id> train|val" lines).
void write_dataset(const Split& split, const std::filesystem::path& dir);

/// Loads <dir>/images + <dir>/masks pairs matched by stem, sorted by id.
/// Inputs are resized so the larger extent equals `size` and zero-padded
/// to size x size. A directory without samples yields an empty list and a
/// warning on stderr.
std::vector<Sample> load_dataset(const std::filesystem::path& dir,
                                 std::size_t size);

/// Reads manifest.txt if present and splits by it; otherwise the seeded
/// split_dataset rule.
Split load_split(const std::filesystem::path& dir, std::size_t size,
                 double val_fraction, std::uint64_t seed);

/// Half-pixel-centre bilinear resampling; identity at the same size.
Tensor resize_bilinear(const Tensor& image, std::size_t h, std::size_t w);
Tensor resize_nearest(const Tensor& image, std::size_t h, std::size_t w);

/// Placement of an H x W input inside a size x size square: the larger
/// extent is scaled to `size`, the rest is centred with zero padding.
struct Letterbox {
  std::size_t size = 0;
  std::size_t height = 0, width = 0;    // original
  std::size_t inner_h = 0, inner_w = 0;  // scaled content
  std::size_t top = 0, left = 0;
};

Letterbox letterbox_geometry(std::size_t height, std::size_t width,
                             std::size_t size);

/// Bilinear (or nearest for masks) resize into the square, zero padded.
Tensor letterbox(const Tensor& t, std::size_t size, bool nearest);

/// Crops the content back out and nearest-resizes to the original extent.
Tensor unletterbox(const Tensor& t, const Letterbox& geometry);

}  // namespace dermseg
