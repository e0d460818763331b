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

// Value-level tensor kernels. The differentiable wrappers in autodiff.hpp
// call into these; the adjoint kernels live in namespace detail.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dermseg/tensor.hpp"

namespace dermseg {

struct ConvGeometry {
  std::size_t dilation = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;  // zeros, per side

  /// Padding that preserves spatial size for an odd kernel at stride 1.
  static ConvGeometry same(std::size_t kernel, std::size_t dilation = 1) {
    return {dilation, 1, dilation * (kernel - 1) / 2};
  }
};

/// Kernel is (out x in x kH x kW) and bias has `out` elements. For a
/// transposed convolution the same kernel is read as its adjoint: input
/// channels index dim 0 and output channels index dim 1, so
/// <conv2d(x, K), y> == <x, conv_transpose2d(y, K)> with zero bias.
struct ConvParams {
  Tensor kernel;
  Tensor bias;
  ConvGeometry geometry;
};

/// floor((in + 2 pad - dilation (k - 1) - 1) / stride) + 1; throws
/// ShapeError when the result would be < 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               const ConvGeometry& g, const char* axis);

/// (in - 1) stride - 2 pad + dilation (k - 1) + 1.
std::size_t conv_transpose_output_extent(std::size_t in, std::size_t kernel,
                                         const ConvGeometry& g,
                                         const char* axis);

Tensor conv2d(const Tensor& input, const ConvParams& params);
Tensor conv_transpose2d(const Tensor& input, const ConvParams& params);

Tensor concat_channels(std::span<const Tensor> parts);
Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t count);

Tensor relu(const Tensor& input);

struct PoolResult {
  Tensor output;
  /// Flat input index selected for each output element.
  std::vector<std::size_t> argmax;
};

PoolResult max_pool2d(const Tensor& input, std::size_t window,
                      std::size_t stride);

Tensor softmax_channels(const Tensor& input);

/// Per-channel mean of the window x window neighbourhood, edge-replicated.
Tensor windowed_mean(const Tensor& input, std::size_t window);

/// Per-channel population variance over the same neighbourhood as
/// windowed_mean, evaluated in two passes.
Tensor local_variance(const Tensor& input, std::size_t window);

namespace detail {

void check_window(std::size_t window, const char* op);

/// Gradient of conv2d with respect to its input.
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel,
                         const ConvGeometry& g, const Shape& input_shape);

/// Accumulates gradients of conv2d with respect to kernel and bias.
void conv2d_param_grad(const Tensor& input, const Tensor& grad_out,
                       const ConvGeometry& g, Tensor& grad_kernel,
                       Tensor* grad_bias);

/// Adjoint of windowed_mean.
Tensor windowed_mean_adjoint(const Tensor& grad_out, std::size_t window);

Tensor local_variance_grad(const Tensor& input, const Tensor& grad_out,
                           std::size_t window);

}  // namespace detail
}  // namespace dermseg
