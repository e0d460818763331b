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

#include "dermseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dermseg {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

struct KernelDims {
  std::size_t out = 0;
  std::size_t in = 0;
  std::size_t kh = 0;
  std::size_t kw = 0;

  std::size_t taps() const { return in * kh * kw; }
};

KernelDims kernel_dims(const Tensor& kernel, const char* op) {
  if (kernel.rank() != 4) {
    throw ShapeError(std::string(op) + ": kernel must be rank 4, got " +
                     to_string(kernel.shape()));
  }
  return {kernel.dim(0), kernel.dim(1), kernel.dim(2), kernel.dim(3)};
}

void check_geometry(const ConvGeometry& g, const char* op) {
  if (g.dilation < 1 || g.stride < 1) {
    throw ValueError(std::string(op) + ": dilation and stride must be >= 1");
  }
}

bool is_pointwise(const KernelDims& k, const ConvGeometry& g) {
  return k.kh == 1 && k.kw == 1 && g.stride == 1 && g.padding == 0;
}

// Input plane geometry and the conv output grid it maps to.
struct Lowering {
  std::size_t channels, h, w, kh, kw, oh, ow;
  ConvGeometry g;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return oh * ow; }
};

void im2col(const double* img, const Lowering& l, double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(l.g.padding);
  const auto h = static_cast<std::ptrdiff_t>(l.h);
  const auto w = static_cast<std::ptrdiff_t>(l.w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < l.channels; ++c) {
    const double* plane = img + c * l.h * l.w;
    for (std::size_t ky = 0; ky < l.kh; ++ky) {
      for (std::size_t kx = 0; kx < l.kw; ++kx, ++row) {
        double* dst = cols + row * l.cols();
        const auto off_y = static_cast<std::ptrdiff_t>(ky * l.g.dilation) - pad;
        const auto off_x = static_cast<std::ptrdiff_t>(kx * l.g.dilation) - pad;
        for (std::size_t oy = 0; oy < l.oh; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * l.g.stride) + off_y;
          if (y < 0 || y >= h) {
            std::fill(dst, dst + l.ow, 0.0);
            dst += l.ow;
            continue;
          }
          const double* src = plane + y * w;
          for (std::size_t ox = 0; ox < l.ow; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * l.g.stride) + off_x;
            *dst++ = (x >= 0 && x < w) ? src[x] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const Lowering& l, double* img) {
  const auto pad = static_cast<std::ptrdiff_t>(l.g.padding);
  const auto h = static_cast<std::ptrdiff_t>(l.h);
  const auto w = static_cast<std::ptrdiff_t>(l.w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < l.channels; ++c) {
    double* plane = img + c * l.h * l.w;
    for (std::size_t ky = 0; ky < l.kh; ++ky) {
      for (std::size_t kx = 0; kx < l.kw; ++kx, ++row) {
        const double* src = cols + row * l.cols();
        const auto off_y = static_cast<std::ptrdiff_t>(ky * l.g.dilation) - pad;
        const auto off_x = static_cast<std::ptrdiff_t>(kx * l.g.dilation) - pad;
        for (std::size_t oy = 0; oy < l.oh; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * l.g.stride) + off_y;
          if (y < 0 || y >= h) {
            src += l.ow;
            continue;
          }
          double* dst = plane + y * w;
          for (std::size_t ox = 0; ox < l.ow; ++ox, ++src) {
            const auto x = static_cast<std::ptrdiff_t>(ox * l.g.stride) + off_x;
            if (x >= 0 && x < w) dst[x] += *src;
          }
        }
      }
    }
  }
}

// Forward correlation of one image: out (O x OHW) = K (O x taps) * cols.
void correlate(const double* img, const Tensor& kernel, const KernelDims& k,
               const Lowering& l, std::vector<double>& scratch, double* out) {
  ConstMap w(kernel.data().data(), k.out, k.taps());
  MutMap y(out, k.out, l.cols());
  if (is_pointwise(k, l.g)) {
    y.noalias() = w * ConstMap(img, l.rows(), l.cols());
    return;
  }
  scratch.resize(l.rows() * l.cols());
  im2col(img, l, scratch.data());
  y.noalias() = w * ConstMap(scratch.data(), l.rows(), l.cols());
}

// Adjoint of correlate: img (I x HW) += col2im(K^T * grad).
void correlate_adjoint(const double* grad, const Tensor& kernel,
                       const KernelDims& k, const Lowering& l,
                       std::vector<double>& scratch, double* img) {
  ConstMap w(kernel.data().data(), k.out, k.taps());
  ConstMap gy(grad, k.out, l.cols());
  if (is_pointwise(k, l.g)) {
    MutMap(img, l.rows(), l.cols()).noalias() += w.transpose() * gy;
    return;
  }
  scratch.resize(l.rows() * l.cols());
  MutMap(scratch.data(), l.rows(), l.cols()).noalias() = w.transpose() * gy;
  col2im_add(scratch.data(), l, img);
}

// grad_kernel (O x taps) += grad (O x OHW) * cols^T.
void correlate_kernel_grad(const double* img, const double* grad,
                           const KernelDims& k, const Lowering& l,
                           std::vector<double>& scratch, double* grad_kernel) {
  MutMap gk(grad_kernel, k.out, k.taps());
  ConstMap gy(grad, k.out, l.cols());
  if (is_pointwise(k, l.g)) {
    gk.noalias() += gy * ConstMap(img, l.rows(), l.cols()).transpose();
    return;
  }
  scratch.resize(l.rows() * l.cols());
  im2col(img, l, scratch.data());
  gk.noalias() += gy * ConstMap(scratch.data(), l.rows(), l.cols()).transpose();
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
  if (bias.size() != channels) {
    throw ShapeError(std::string(op) + ": bias has " +
                     std::to_string(bias.size()) + " elements, expected " +
                     std::to_string(channels) + " (output channels)");
  }
}

void add_bias(const Tensor& bias, std::size_t channels, std::size_t plane,
              double* out) {
  for (std::size_t c = 0; c < channels; ++c) {
    const double b = bias[c];
    if (b == 0.0) continue;
    double* p = out + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return 0;
  if (i >= static_cast<std::ptrdiff_t>(n)) return n - 1;
  return static_cast<std::size_t>(i);
}

// Clamped source index for each (position, offset) pair along one axis.
std::vector<std::size_t> replicate_table(std::size_t n, std::size_t window) {
  const auto r = static_cast<std::ptrdiff_t>(window / 2);
  std::vector<std::size_t> table(n * window);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < window; ++t) {
      table[i * window + t] =
          clamp_index(static_cast<std::ptrdiff_t>(i) - r +
                          static_cast<std::ptrdiff_t>(t),
                      n);
    }
  }
  return table;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               const ConvGeometry& g, const char* axis) {
  const auto span = static_cast<std::ptrdiff_t>(in + 2 * g.padding) -
                    static_cast<std::ptrdiff_t>(g.dilation * (kernel - 1)) - 1;
  if (span < 0) {
    throw ShapeError(std::string("conv2d: degenerate output along ") + axis +
                     " (input " + std::to_string(in) + ", kernel " +
                     std::to_string(kernel) + ", dilation " +
                     std::to_string(g.dilation) + ", padding " +
                     std::to_string(g.padding) + ")");
  }
  return static_cast<std::size_t>(span) / g.stride + 1;
}

std::size_t conv_transpose_output_extent(std::size_t in, std::size_t kernel,
                                         const ConvGeometry& g,
                                         const char* axis) {
  const auto out = static_cast<std::ptrdiff_t>((in - 1) * g.stride) -
                   static_cast<std::ptrdiff_t>(2 * g.padding) +
                   static_cast<std::ptrdiff_t>(g.dilation * (kernel - 1)) + 1;
  if (out < 1) {
    throw ShapeError(std::string("conv_transpose2d: degenerate output along ") +
                     axis);
  }
  return static_cast<std::size_t>(out);
}

Tensor conv2d(const Tensor& input, const ConvParams& params) {
  check_geometry(params.geometry, "conv2d");
  const ImageDims d = image_dims(input, "conv2d");
  const KernelDims k = kernel_dims(params.kernel, "conv2d");
  if (k.in != d.c) {
    throw ShapeError("conv2d: input channel dimension is " +
                     std::to_string(d.c) + " but kernel expects " +
                     std::to_string(k.in));
  }
  check_bias(params.bias, k.out, "conv2d");
  const Lowering l{d.c,
                   d.h,
                   d.w,
                   k.kh,
                   k.kw,
                   conv_output_extent(d.h, k.kh, params.geometry, "height"),
                   conv_output_extent(d.w, k.kw, params.geometry, "width"),
                   params.geometry};
  Tensor out(image_shape(input, k.out, l.oh, l.ow));
  std::vector<double> scratch;
  for (std::size_t n = 0; n < d.n; ++n) {
    double* y = out.data().data() + n * k.out * l.cols();
    correlate(input.data().data() + n * d.image(), params.kernel, k, l,
              scratch, y);
    add_bias(params.bias, k.out, l.cols(), y);
  }
  return out;
}

Tensor conv_transpose2d(const Tensor& input, const ConvParams& params) {
  check_geometry(params.geometry, "conv_transpose2d");
  const ImageDims d = image_dims(input, "conv_transpose2d");
  const KernelDims k = kernel_dims(params.kernel, "conv_transpose2d");
  if (k.out != d.c) {
    throw ShapeError("conv_transpose2d: input channel dimension is " +
                     std::to_string(d.c) + " but kernel dim 0 is " +
                     std::to_string(k.out));
  }
  check_bias(params.bias, k.in, "conv_transpose2d");
  const std::size_t h =
      conv_transpose_output_extent(d.h, k.kh, params.geometry, "height");
  const std::size_t w =
      conv_transpose_output_extent(d.w, k.kw, params.geometry, "width");
  const Lowering l{k.in, h, w, k.kh, k.kw, d.h, d.w, params.geometry};
  Tensor out(image_shape(input, k.in, h, w));
  std::vector<double> scratch;
  for (std::size_t n = 0; n < d.n; ++n) {
    double* x = out.data().data() + n * k.in * h * w;
    correlate_adjoint(input.data().data() + n * d.image(), params.kernel, k, l,
                      scratch, x);
    add_bias(params.bias, k.in, h * w, x);
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no parts");
  const ImageDims first = image_dims(parts.front(), "concat_channels");
  std::size_t channels = 0;
  for (const Tensor& p : parts) {
    const ImageDims d = image_dims(p, "concat_channels");
    if (p.rank() != parts.front().rank() || d.n != first.n ||
        d.h != first.h || d.w != first.w) {
      throw ShapeError("concat_channels: part of shape " + to_string(p.shape()) +
                       " does not match spatial shape " +
                       to_string(parts.front().shape()));
    }
    channels += d.c;
  }
  Tensor out(image_shape(parts.front(), channels, first.h, first.w));
  double* dst = out.data().data();
  for (std::size_t n = 0; n < first.n; ++n) {
    for (const Tensor& p : parts) {
      const std::size_t len = p.size() / first.n;
      const double* src = p.data().data() + n * len;
      dst = std::copy(src, src + len, dst);
    }
  }
  return out;
}

Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t count) {
  const ImageDims d = image_dims(t, "slice_channels");
  if (count == 0 || begin + count > d.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") exceeds " +
                     std::to_string(d.c) + " channels");
  }
  Tensor out(image_shape(t, count, d.h, d.w));
  for (std::size_t n = 0; n < d.n; ++n) {
    const double* src = t.data().data() + n * d.image() + begin * d.plane();
    std::copy(src, src + count * d.plane(),
              out.data().data() + n * count * d.plane());
  }
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

PoolResult max_pool2d(const Tensor& input, std::size_t window,
                      std::size_t stride) {
  if (window < 1 || stride < 1) {
    throw ValueError("max_pool2d: window and stride must be >= 1");
  }
  const ImageDims d = image_dims(input, "max_pool2d");
  if (window > d.h || window > d.w) {
    throw ShapeError("max_pool2d: degenerate output, window " +
                     std::to_string(window) + " exceeds input " +
                     to_string(input.shape()));
  }
  const std::size_t oh = (d.h - window) / stride + 1;
  const std::size_t ow = (d.w - window) / stride + 1;
  PoolResult r{Tensor(image_shape(input, d.c, oh, ow)), {}};
  r.argmax.resize(r.output.size());
  const double* src = input.data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
    const std::size_t base = plane * d.plane();
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + oy * stride * d.w + ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx =
                base + (oy * stride + ky) * d.w + ox * stride + kx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        r.output[o] = src[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

Tensor softmax_channels(const Tensor& input) {
  const ImageDims d = image_dims(input, "softmax_channels");
  Tensor out(input.shape());
  const double* src = input.data().data();
  double* dst = out.data().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    const std::size_t base = n * d.image();
    for (std::size_t p = 0; p < d.plane(); ++p) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < d.c; ++c) {
        m = std::max(m, src[base + c * d.plane() + p]);
      }
      double total = 0.0;
      for (std::size_t c = 0; c < d.c; ++c) {
        const std::size_t i = base + c * d.plane() + p;
        dst[i] = std::exp(src[i] - m);
        total += dst[i];
      }
      for (std::size_t c = 0; c < d.c; ++c) dst[base + c * d.plane() + p] /= total;
    }
  }
  return out;
}

Tensor windowed_mean(const Tensor& input, std::size_t window) {
  detail::check_window(window, "windowed_mean");
  const ImageDims d = image_dims(input, "windowed_mean");
  const auto cols = replicate_table(d.w, window);
  const auto rows = replicate_table(d.h, window);
  const double scale = 1.0 / static_cast<double>(window * window);
  Tensor out(input.shape());
  std::vector<double> tmp(d.plane());
  for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
    const double* src = input.data().data() + plane * d.plane();
    double* dst = out.data().data() + plane * d.plane();
    for (std::size_t y = 0; y < d.h; ++y) {
      for (std::size_t x = 0; x < d.w; ++x) {
        double acc = 0.0;
        for (std::size_t t = 0; t < window; ++t) {
          acc += src[y * d.w + cols[x * window + t]];
        }
        tmp[y * d.w + x] = acc;
      }
    }
    for (std::size_t y = 0; y < d.h; ++y) {
      for (std::size_t x = 0; x < d.w; ++x) {
        double acc = 0.0;
        for (std::size_t t = 0; t < window; ++t) {
          acc += tmp[rows[y * window + t] * d.w + x];
        }
        dst[y * d.w + x] = acc * scale;
      }
    }
  }
  return out;
}

Tensor local_variance(const Tensor& input, std::size_t window) {
  detail::check_window(window, "local_variance");
  const ImageDims d = image_dims(input, "local_variance");
  const Tensor mean = windowed_mean(input, window);
  const auto cols = replicate_table(d.w, window);
  const auto rows = replicate_table(d.h, window);
  const double scale = 1.0 / static_cast<double>(window * window);
  Tensor out(input.shape());
  for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
    const double* src = input.data().data() + plane * d.plane();
    const double* mu = mean.data().data() + plane * d.plane();
    double* dst = out.data().data() + plane * d.plane();
    for (std::size_t y = 0; y < d.h; ++y) {
      for (std::size_t x = 0; x < d.w; ++x) {
        const double m = mu[y * d.w + x];
        double acc = 0.0;
        for (std::size_t ty = 0; ty < window; ++ty) {
          const double* row = src + rows[y * window + ty] * d.w;
          for (std::size_t tx = 0; tx < window; ++tx) {
            const double dev = row[cols[x * window + tx]] - m;
            acc += dev * dev;
          }
        }
        dst[y * d.w + x] = acc * scale;
      }
    }
  }
  return out;
}

namespace detail {

void check_window(std::size_t window, const char* op) {
  if (window < 1 || window % 2 == 0) {
    throw ValueError(std::string(op) + ": window must be odd and >= 1, got " +
                     std::to_string(window));
  }
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernel,
                         const ConvGeometry& g, const Shape& input_shape) {
  const KernelDims k = kernel_dims(kernel, "conv2d");
  const ImageDims gd = image_dims(grad_out, "conv2d");
  Tensor grad_in(input_shape);
  const ImageDims d = image_dims(grad_in, "conv2d");
  const Lowering l{d.c, d.h, d.w, k.kh, k.kw, gd.h, gd.w, g};
  std::vector<double> scratch;
  for (std::size_t n = 0; n < d.n; ++n) {
    correlate_adjoint(grad_out.data().data() + n * gd.image(), kernel, k, l,
                      scratch, grad_in.data().data() + n * d.image());
  }
  return grad_in;
}

void conv2d_param_grad(const Tensor& input, const Tensor& grad_out,
                       const ConvGeometry& g, Tensor& grad_kernel,
                       Tensor* grad_bias) {
  const KernelDims k = kernel_dims(grad_kernel, "conv2d");
  const ImageDims d = image_dims(input, "conv2d");
  const ImageDims gd = image_dims(grad_out, "conv2d");
  const Lowering l{d.c, d.h, d.w, k.kh, k.kw, gd.h, gd.w, g};
  std::vector<double> scratch;
  for (std::size_t n = 0; n < d.n; ++n) {
    const double* gy = grad_out.data().data() + n * gd.image();
    correlate_kernel_grad(input.data().data() + n * d.image(), gy, k, l,
                          scratch, grad_kernel.data().data());
    if (grad_bias) {
      for (std::size_t c = 0; c < k.out; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < gd.plane(); ++i) acc += gy[c * gd.plane() + i];
        (*grad_bias)[c] += acc;
      }
    }
  }
}

Tensor windowed_mean_adjoint(const Tensor& grad_out, std::size_t window) {
  check_window(window, "windowed_mean");
  const ImageDims d = image_dims(grad_out, "windowed_mean");
  const auto cols = replicate_table(d.w, window);
  const auto rows = replicate_table(d.h, window);
  const double scale = 1.0 / static_cast<double>(window * window);
  Tensor grad_in(grad_out.shape());
  std::vector<double> tmp(d.plane());
  for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
    const double* g = grad_out.data().data() + plane * d.plane();
    double* dst = grad_in.data().data() + plane * d.plane();
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t y = 0; y < d.h; ++y) {
      for (std::size_t x = 0; x < d.w; ++x) {
        const double v = g[y * d.w + x] * scale;
        for (std::size_t t = 0; t < window; ++t) {
          tmp[rows[y * window + t] * d.w + x] += v;
        }
      }
    }
    for (std::size_t y = 0; y < d.h; ++y) {
      for (std::size_t x = 0; x < d.w; ++x) {
        const double v = tmp[y * d.w + x];
        for (std::size_t t = 0; t < window; ++t) {
          dst[y * d.w + cols[x * window + t]] += v;
        }
      }
    }
  }
  return grad_in;
}

// d var_p / d S_q = (2 / n) (S_q - mean_p) per occurrence of q in window p;
// the mean's own derivative cancels because deviations sum to zero.
Tensor local_variance_grad(const Tensor& input, const Tensor& grad_out,
                           std::size_t window) {
  check_window(window, "local_variance");
  const ImageDims d = image_dims(input, "local_variance");
  const Tensor mean = windowed_mean(input, window);
  const auto cols = replicate_table(d.w, window);
  const auto rows = replicate_table(d.h, window);
  const double scale = 2.0 / static_cast<double>(window * window);
  Tensor grad_in(input.shape());
  for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
    const double* src = input.data().data() + plane * d.plane();
    const double* mu = mean.data().data() + plane * d.plane();
    const double* g = grad_out.data().data() + plane * d.plane();
    double* dst = grad_in.data().data() + plane * d.plane();
    for (std::size_t y = 0; y < d.h; ++y) {
      for (std::size_t x = 0; x < d.w; ++x) {
        const double gv = g[y * d.w + x] * scale;
        if (gv == 0.0) continue;
        const double m = mu[y * d.w + x];
        for (std::size_t ty = 0; ty < window; ++ty) {
          const std::size_t r = rows[y * window + ty] * d.w;
          for (std::size_t tx = 0; tx < window; ++tx) {
            const std::size_t q = r + cols[x * window + tx];
            dst[q] += gv * (src[q] - m);
          }
        }
      }
    }
  }
  return grad_in;
}

}  // namespace detail
}  // namespace dermseg
