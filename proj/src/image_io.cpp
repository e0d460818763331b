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
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

#include "dermseg/data_io.hpp"

#ifdef DERMSEG_HAVE_PNG
#include <png.h>
#endif

namespace dermseg {
namespace {

// 8-bit interleaved pixels.
struct Raster {
  std::size_t width = 0, height = 0, channels = 0;
  std::vector<unsigned char> pixels;
};

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Raster to_raster(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("write_image: expected 1xHxW or 3xHxW, got " +
                     to_string(image.shape()));
  }
  Raster r{image.dim(2), image.dim(1), image.dim(0), {}};
  r.pixels.resize(r.width * r.height * r.channels);
  for (std::size_t y = 0; y < r.height; ++y) {
    for (std::size_t x = 0; x < r.width; ++x) {
      for (std::size_t c = 0; c < r.channels; ++c) {
        r.pixels[(y * r.width + x) * r.channels + c] = quantize(image.at(c, y, x));
      }
    }
  }
  return r;
}

Tensor from_raster(const Raster& r) {
  Tensor t(Shape{r.channels, r.height, r.width});
  for (std::size_t y = 0; y < r.height; ++y) {
    for (std::size_t x = 0; x < r.width; ++x) {
      for (std::size_t c = 0; c < r.channels; ++c) {
        t.at(c, y, x) = r.pixels[(y * r.width + x) * r.channels + c] / 255.0;
      }
    }
  }
  return t;
}

void write_pnm(const Raster& r, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << (r.channels == 3 ? "P6" : "P5") << '\n'
    << r.width << ' ' << r.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(r.pixels.data()),
          static_cast<std::streamsize>(r.pixels.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

Raster read_pnm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  const std::string bytes(std::istreambuf_iterator<char>(f), {});
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    }
    if (start == pos) throw IoError(path.string() + ": truncated PNM header");
    return bytes.substr(start, pos - start);
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") {
    throw IoError(path.string() + ": unsupported PNM type '" + magic + "'");
  }
  Raster r;
  r.channels = magic == "P6" ? 3 : 1;
  try {
    r.width = std::stoul(token());
    r.height = std::stoul(token());
    if (std::stoul(token()) != 255) {
      throw IoError(path.string() + ": only 8-bit PNM is supported");
    }
  } catch (const std::logic_error&) {
    throw IoError(path.string() + ": malformed PNM header");
  }
  ++pos;  // single whitespace after maxval
  const std::size_t len = r.width * r.height * r.channels;
  if (r.width == 0 || r.height == 0 || pos + len > bytes.size()) {
    throw IoError(path.string() + ": truncated PNM data");
  }
  r.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
  return r;
}

#ifdef DERMSEG_HAVE_PNG

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

void write_png(const Raster& r, const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(r.width),
               static_cast<png_uint_32>(r.height), 8,
               r.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < r.height; ++y) {
    png_write_row(png, r.pixels.data() + y * r.width * r.channels);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Raster read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": unreadable PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  Raster r;
  r.width = png_get_image_width(png, info);
  r.height = png_get_image_height(png, info);
  r.channels = png_get_channels(png, info);
  r.pixels.resize(r.width * r.height * r.channels);
  for (std::size_t y = 0; y < r.height; ++y) {
    png_read_row(png, r.pixels.data() + y * r.width * r.channels, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (r.channels != 1 && r.channels != 3) {
    throw IoError(path.string() + ": unsupported PNG channel layout");
  }
  return r;
}

#endif  // DERMSEG_HAVE_PNG

Raster read_raster(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
#ifdef DERMSEG_HAVE_PNG
  if (ext == ".png") return read_png(path);
#endif
  throw IoError(path.string() + ": unsupported image format '" + ext + "'");
}

void write_raster(const Raster& r, const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return write_pnm(r, path);
#ifdef DERMSEG_HAVE_PNG
  if (ext == ".png") return write_png(r, path);
#endif
  throw IoError(path.string() + ": unsupported image format '" + ext + "'");
}

}  // namespace

bool has_png_support() {
#ifdef DERMSEG_HAVE_PNG
  return true;
#else
  return false;
#endif
}

Tensor read_image(const std::filesystem::path& path) {
  return from_raster(read_raster(path));
}

void write_image(const Tensor& image, const std::filesystem::path& path) {
  write_raster(to_raster(image), path);
}

void write_mask(const Tensor& mask, const std::filesystem::path& path) {
  if (mask.rank() != 3 || mask.dim(0) != 1) {
    throw ShapeError("write_mask: expected 1xHxW, got " + to_string(mask.shape()));
  }
  Tensor binary = mask;
  for (double& v : binary.data()) {
    if (v != 0.0 && v != 1.0) throw ValueError("write_mask: mask is not binary");
  }
  write_raster(to_raster(binary), path);
}

Tensor read_mask(const std::filesystem::path& path) {
  Raster r = read_raster(path);
  if (r.channels != 1) {
    throw IoError(path.string() + ": mask must be single-channel");
  }
  Tensor t(Shape{1, r.height, r.width});
  for (std::size_t i = 0; i < r.pixels.size(); ++i) {
    t[i] = r.pixels[i] >= 128 ? 1.0 : 0.0;
  }
  return t;
}

}  // namespace dermseg
