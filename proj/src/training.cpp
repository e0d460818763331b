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

#include "dermseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace dermseg {
namespace {

constexpr double kRunningLossDecay = 0.9;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

Tensor flip(const Tensor& t, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return t;
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor out(t.shape());
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t sy = vertical ? h - 1 - y : y;
      for (std::size_t x = 0; x < w; ++x) {
        out.at(k, y, x) = t.at(k, sy, horizontal ? w - 1 - x : x);
      }
    }
  }
  return out;
}

// Centre crop or edge-replicating pad of `t` to h x w.
Tensor fit_centre(const Tensor& t, std::size_t h, std::size_t w) {
  const auto th = static_cast<std::ptrdiff_t>(t.dim(1));
  const auto tw = static_cast<std::ptrdiff_t>(t.dim(2));
  const std::ptrdiff_t oy = (th - static_cast<std::ptrdiff_t>(h)) / 2;
  const std::ptrdiff_t ox = (tw - static_cast<std::ptrdiff_t>(w)) / 2;
  Tensor out(Shape{t.dim(0), h, w});
  for (std::size_t k = 0; k < t.dim(0); ++k) {
    for (std::size_t y = 0; y < h; ++y) {
      const auto sy = static_cast<std::size_t>(
          std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + oy, 0, th - 1));
      for (std::size_t x = 0; x < w; ++x) {
        const auto sx = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) + ox, 0, tw - 1));
        out.at(k, y, x) = t.at(k, sy, sx);
      }
    }
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ValueError("train: base_lr must be > 0");
  if (!(power > 0.0 && power <= 1.0)) throw ValueError("train: power must lie in (0, 1]");
  if (max_iter < 1) throw ValueError("train: max_iter must be >= 1");
  if (class_weights.size() != kNumClasses) {
    throw ValueError("train: expected " + std::to_string(kNumClasses) +
                     " class weights");
  }
  for (double w : class_weights) {
    if (!(w > 0.0)) throw ValueError("train: class weights must be positive");
  }
  if (batch_size < 1) throw ValueError("train: batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ValueError("train: momentum must lie in [0, 1)");
  }
}

double poly_lr(std::size_t iter, const TrainConfig& config) {
  if (iter > config.max_iter) {
    throw ValueError("poly_lr: iteration " + std::to_string(iter) +
                     " exceeds max_iter " + std::to_string(config.max_iter));
  }
  const double progress =
      static_cast<double>(iter) / static_cast<double>(config.max_iter);
  return config.base_lr * std::pow(1.0 - progress, config.power);
}

Tensor one_hot_labels(const Tensor& mask) {
  const ImageDims d = image_dims(mask, "one_hot_labels");
  if (d.c != 1) throw ShapeError("one_hot_labels: mask must have one channel");
  Tensor labels(image_shape(mask, kNumClasses, d.h, d.w));
  const std::size_t lesion = kLesionChannel, background = 1 - kLesionChannel;
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t p = 0; p < d.plane(); ++p) {
      const double m = mask[n * d.plane() + p];
      if (m != 0.0 && m != 1.0) throw ValueError("one_hot_labels: mask is not binary");
      labels[(n * kNumClasses + lesion) * d.plane() + p] = m;
      labels[(n * kNumClasses + background) * d.plane() + p] = 1.0 - m;
    }
  }
  return labels;
}

double weighted_ce_loss(const Tensor& probs, const Tensor& labels,
                        std::span<const double> class_weights) {
  return ad::weighted_cross_entropy(constant(probs), labels, class_weights)
      .value()
      .item();
}

void sgd_step(TrainState& state, const ParamSet& grads, double lr,
              double momentum) {
  for (const auto& [name, g] : grads) {
    if (!state.params.contains(name)) {
      throw ValueError("sgd_step: gradient for unknown parameter '" + name + "'");
    }
  }
  for (auto& [name, theta] : state.params) {
    auto it = grads.find(name);
    if (it == grads.end()) {
      throw ValueError("sgd_step: missing gradient for '" + name + "'");
    }
    if (it->second.shape() != theta.shape()) {
      throw ShapeError("sgd_step: gradient for '" + name + "' has shape " +
                       to_string(it->second.shape()) + ", parameter has " +
                       to_string(theta.shape()));
    }
    if (momentum == 0.0) {
      theta -= it->second * lr;
      continue;
    }
    auto [vit, fresh] = state.velocity.try_emplace(name, Tensor(theta.shape()));
    Tensor& v = vit->second;
    v *= momentum;
    v += it->second;
    theta -= v * lr;
  }
  ++state.iteration;
}

AugmentDraw draw_augment(std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  AugmentDraw d;
  d.flip_h = coin(rng);
  d.flip_v = coin(rng);
  d.scale = std::uniform_real_distribution<double>(0.8, 1.2)(rng);
  return d;
}

std::pair<Tensor, Tensor> apply_augment(const Tensor& image, const Tensor& mask,
                                        const AugmentDraw& draw) {
  if (image.rank() != 3 || mask.rank() != 3 || image.dim(1) != mask.dim(1) ||
      image.dim(2) != mask.dim(2)) {
    throw ShapeError("augment: image " + to_string(image.shape()) +
                     " and mask " + to_string(mask.shape()) +
                     " must be CxHxW with equal spatial dims");
  }
  Tensor img = flip(image, draw.flip_h, draw.flip_v);
  Tensor msk = flip(mask, draw.flip_h, draw.flip_v);
  if (draw.scale == 1.0) return {std::move(img), std::move(msk)};
  const std::size_t h = image.dim(1), w = image.dim(2);
  const auto sh = std::max<std::size_t>(1, std::lround(h * draw.scale));
  const auto sw = std::max<std::size_t>(1, std::lround(w * draw.scale));
  return {fit_centre(resize_bilinear(img, sh, sw), h, w),
          fit_centre(resize_nearest(msk, sh, sw), h, w)};
}

std::pair<Tensor, Tensor> augment(const Tensor& image, const Tensor& mask,
                                  std::mt19937_64& rng) {
  return apply_augment(image, mask, draw_augment(rng));
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw ValueError("stack_batch: no items");
  const Shape& item = items.front().shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), item.begin(), item.end());
  std::vector<double> data;
  data.reserve(items.size() * items.front().size());
  for (const Tensor& t : items) {
    if (t.shape() != item) throw ShapeError("stack_batch: mismatched item shapes");
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

TrainResult train(const std::vector<Sample>& dataset, const ModelConfig& model,
                  const TrainConfig& config, const ParamSet* init,
                  const TrainProgress& progress) {
  if (dataset.empty()) throw ValueError("train: dataset is empty");
  config.validate();
  model.validate();

  TrainResult result;
  TrainState& state = result.state;
  state.params = init ? *init : init_model(model, config.seed);
  state.sample_rng = stream(config.seed, 1);
  state.augment_rng = stream(config.seed, 2);
  result.log.reserve(config.max_iter);

  // Epoch-wise shuffled order; a new permutation once it is exhausted.
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  std::vector<Tensor> images(config.batch_size), masks(config.batch_size);
  while (state.iteration < config.max_iter) {
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), state.sample_rng);
        cursor = 0;
      }
      const Sample& s = dataset[order[cursor++]];
      if (config.augment) {
        std::tie(images[b], masks[b]) = augment(s.image, s.mask, state.augment_rng);
      } else {
        images[b] = s.image;
        masks[b] = s.mask;
      }
    }
    const Tensor labels = one_hot_labels(stack_batch(masks));

    const VarMap vars = dermseg::bind(state.params, true);
    const ModelOutput out = model_forward(model, vars, constant(stack_batch(images)));
    const Var loss =
        ad::weighted_cross_entropy(out.probs, labels, config.class_weights);
    const double value = loss.value().item();
    const double lr = poly_lr(state.iteration, config);
    if (!std::isfinite(value)) {
      throw Error("train: non-finite loss " + std::to_string(value) +
                  " at iteration " + std::to_string(state.iteration) +
                  " (lr " + std::to_string(lr) + ")");
    }

    std::vector<Var> wrt;
    wrt.reserve(vars.size());
    for (const auto& [name, v] : vars) wrt.push_back(v);
    std::vector<Tensor> g = gradients(loss, wrt);
    ParamSet grads;
    std::size_t i = 0;
    for (const auto& [name, v] : vars) grads.emplace(name, std::move(g[i++]));

    const LossRecord record{state.iteration, lr, value};
    result.log.push_back(record);
    state.running_loss = state.iteration == 0
                             ? value
                             : kRunningLossDecay * state.running_loss +
                                   (1.0 - kRunningLossDecay) * value;
    sgd_step(state, grads, lr, config.momentum);
    if (progress) progress(record);
  }
  return result;
}

void write_loss_log(const std::filesystem::path& path,
                    std::span<const LossRecord> log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << "iter,lr,loss\n";
  char line[96];
  for (const LossRecord& r : log) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g\n", r.iter, r.lr, r.loss);
    f << line;
  }
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace dermseg
