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
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dermseg {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes; the message names the offending dimension.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's domain (even window, sigma-sq <= 0, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. Image tensors are C x H x W, or
/// N x C x H x W with a leading batch dimension.
class Tensor {
 public:
  /// A single zero; keeps Tensor default-constructible.
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor like(const Tensor& other, double fill = 0.0);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  /// Element of a rank-3 (C,H,W) tensor.
  double at(std::size_t c, std::size_t y, std::size_t x) const;
  double& at(std::size_t c, std::size_t y, std::size_t x);

  /// Only valid when the tensor holds exactly one element.
  double item() const;

  Tensor reshaped(Shape shape) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
double sum(const Tensor& t);

/// Batch view of an image tensor: (C,H,W) reads as n = 1.
struct ImageDims {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t plane() const { return h * w; }
  std::size_t image() const { return c * h * w; }
};

/// Throws ShapeError unless `t` has rank 3 or 4.
ImageDims image_dims(const Tensor& t, const char* what);

/// Shape with the same batch convention as `like` but new C, H, W.
Shape image_shape(const Tensor& like, std::size_t c, std::size_t h,
                  std::size_t w);

}  // namespace dermseg
