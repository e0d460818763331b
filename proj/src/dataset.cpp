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
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "dermseg/data_io.hpp"

namespace fs = std::filesystem;

namespace dermseg {
namespace {

const std::set<std::string> kImageExtensions{".ppm", ".png", ".pnm"};
const std::set<std::string> kMaskExtensions{".pgm", ".png", ".pnm"};

std::map<std::string, fs::path> files_by_stem(const fs::path& dir,
                                              const std::set<std::string>& exts) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (!exts.contains(entry.path().extension().string())) continue;
    const std::string stem = entry.path().stem().string();
    if (!out.emplace(stem, entry.path()).second) {
      throw IoError("duplicate files for id '" + stem + "' in " + dir.string());
    }
  }
  return out;
}

Tensor as_rgb(const Tensor& image) {
  if (image.dim(0) == 3) return image;
  Tensor rgb(Shape{3, image.dim(1), image.dim(2)});
  for (std::size_t c = 0; c < 3; ++c) {
    std::copy(image.data().begin(), image.data().end(),
              rgb.data().begin() + static_cast<std::ptrdiff_t>(c * image.size()));
  }
  return rgb;
}

}  // namespace

Split split_dataset(std::vector<Sample> samples, double val_fraction,
                    std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ValueError("validation fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::lround((1.0 - val_fraction) * static_cast<double>(samples.size())));
  Split split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? split.train : split.val).push_back(std::move(samples[order[i]]));
  }
  return split;
}

void write_sample(const Sample& sample, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  write_image(sample.image, dir / "images" / (sample.id + ".ppm"));
  write_mask(sample.mask, dir / "masks" / (sample.id + ".pgm"));
}

void write_dataset(const Split& split, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
  for (const Sample& s : split.train) {
    write_sample(s, dir);
    manifest << s.id << " train\n";
  }
  for (const Sample& s : split.val) {
    write_sample(s, dir);
    manifest << s.id << " val\n";
  }
}

std::vector<Sample> load_dataset(const fs::path& dir, std::size_t size) {
  if (size == 0) throw ValueError("load_dataset: size must be positive");
  const auto images = files_by_stem(dir / "images", kImageExtensions);
  const auto masks = files_by_stem(dir / "masks", kMaskExtensions);
  std::vector<std::string> unmatched;
  for (const auto& [stem, _] : images) {
    if (!masks.contains(stem)) unmatched.push_back(stem + " (no mask)");
  }
  for (const auto& [stem, _] : masks) {
    if (!images.contains(stem)) unmatched.push_back(stem + " (no image)");
  }
  if (!unmatched.empty()) {
    std::ostringstream os;
    os << "unmatched samples in " << dir.string() << ':';
    for (const auto& u : unmatched) os << ' ' << u;
    throw IoError(os.str());
  }
  if (images.empty()) {
    std::cerr << "warning: no samples found in " << dir.string() << '\n';
    return {};
  }
  std::vector<Sample> out;
  for (const auto& [stem, image_path] : images) {
    Tensor image = as_rgb(read_image(image_path));
    Tensor mask = read_mask(masks.at(stem));
    if (image.dim(1) != mask.dim(1) || image.dim(2) != mask.dim(2)) {
      throw IoError("image and mask sizes differ for '" + stem + "'");
    }
    out.push_back({letterbox(image, size, false), letterbox(mask, size, true), stem});
  }
  return out;
}

Split load_split(const fs::path& dir, std::size_t size, double val_fraction,
                 std::uint64_t seed) {
  std::vector<Sample> samples = load_dataset(dir, size);
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) return split_dataset(std::move(samples), val_fraction, seed);
  std::map<std::string, std::string> assignment;
  std::string id, part;
  while (manifest >> id >> part) {
    if (part != "train" && part != "val") {
      throw IoError("manifest: unknown split '" + part + "' for " + id);
    }
    assignment[id] = part;
  }
  Split split;
  for (Sample& s : samples) {
    auto it = assignment.find(s.id);
    if (it == assignment.end()) {
      throw IoError("manifest: no split assigned to '" + s.id + "'");
    }
    (it->second == "train" ? split.train : split.val).push_back(std::move(s));
  }
  return split;
}

Letterbox letterbox_geometry(std::size_t height, std::size_t width,
                             std::size_t size) {
  if (height == 0 || width == 0 || size == 0) {
    throw ValueError("letterbox: extents must be positive");
  }
  const double s = static_cast<double>(size) / static_cast<double>(std::max(height, width));
  Letterbox g{size, height, width, 0, 0, 0, 0};
  g.inner_h = std::clamp<std::size_t>(std::lround(height * s), 1, size);
  g.inner_w = std::clamp<std::size_t>(std::lround(width * s), 1, size);
  g.top = (size - g.inner_h) / 2;
  g.left = (size - g.inner_w) / 2;
  return g;
}

Tensor letterbox(const Tensor& t, std::size_t size, bool nearest) {
  if (t.rank() != 3) throw ShapeError("letterbox: expected CxHxW");
  const Letterbox g = letterbox_geometry(t.dim(1), t.dim(2), size);
  if (g.inner_h == t.dim(1) && g.inner_w == t.dim(2) && g.top == 0 && g.left == 0) {
    return t;
  }
  const Tensor r = nearest ? resize_nearest(t, g.inner_h, g.inner_w)
                           : resize_bilinear(t, g.inner_h, g.inner_w);
  Tensor out(Shape{t.dim(0), size, size});
  for (std::size_t c = 0; c < t.dim(0); ++c) {
    for (std::size_t y = 0; y < g.inner_h; ++y) {
      for (std::size_t x = 0; x < g.inner_w; ++x) {
        out.at(c, g.top + y, g.left + x) = r.at(c, y, x);
      }
    }
  }
  return out;
}

Tensor unletterbox(const Tensor& t, const Letterbox& g) {
  if (t.rank() != 3 || t.dim(1) != g.size || t.dim(2) != g.size) {
    throw ShapeError("unletterbox: expected Cx" + std::to_string(g.size) + "x" +
                     std::to_string(g.size));
  }
  Tensor inner(Shape{t.dim(0), g.inner_h, g.inner_w});
  for (std::size_t c = 0; c < t.dim(0); ++c) {
    for (std::size_t y = 0; y < g.inner_h; ++y) {
      for (std::size_t x = 0; x < g.inner_w; ++x) {
        inner.at(c, y, x) = t.at(c, g.top + y, g.left + x);
      }
    }
  }
  if (g.inner_h == g.height && g.inner_w == g.width) return inner;
  return resize_nearest(inner, g.height, g.width);
}

Tensor resize_bilinear(const Tensor& image, std::size_t h, std::size_t w) {
  if (image.rank() != 3) throw ShapeError("resize: expected CxHxW");
  const std::size_t ih = image.dim(1), iw = image.dim(2);
  Tensor out(Shape{image.dim(0), h, w});
  const double sy = static_cast<double>(ih) / h, sx = static_cast<double>(iw) / w;
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, ih - 1.0);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, ih - 1);
    const double ty = fy - y0;
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, iw - 1.0);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, iw - 1);
      const double tx = fx - x0;
      for (std::size_t c = 0; c < image.dim(0); ++c) {
        const double top = image.at(c, y0, x0) * (1 - tx) + image.at(c, y0, x1) * tx;
        const double bot = image.at(c, y1, x0) * (1 - tx) + image.at(c, y1, x1) * tx;
        out.at(c, y, x) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

Tensor resize_nearest(const Tensor& image, std::size_t h, std::size_t w) {
  if (image.rank() != 3) throw ShapeError("resize: expected CxHxW");
  const std::size_t ih = image.dim(1), iw = image.dim(2);
  Tensor out(Shape{image.dim(0), h, w});
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t sy = std::min(ih - 1, static_cast<std::size_t>((y + 0.5) * ih / h));
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx =
          std::min(iw - 1, static_cast<std::size_t>((x + 0.5) * iw / w));
      for (std::size_t c = 0; c < image.dim(0); ++c) {
        out.at(c, y, x) = image.at(c, sy, sx);
      }
    }
  }
  return out;
}

}  // namespace dermseg
