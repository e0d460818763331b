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
#include <functional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "dermseg/data_io.hpp"
#include "dermseg/model.hpp"
#include "dermseg/params.hpp"

namespace dermseg {

struct TrainConfig {
  double base_lr = 1e-3;
  double power = 0.9;
  std::size_t max_iter = 1000;
  /// Indexed by class channel: lesion, background.
  std::vector<double> class_weights{0.8, 0.2};
  std::uint64_t seed = 1;
  std::size_t batch_size = 4;
  /// 0 gives plain SGD.
  double momentum = 0.0;
  bool augment = true;

  void validate() const;
};

/// base_lr * (1 - iter / max_iter)^power for 0 <= iter <= max_iter.
double poly_lr(std::size_t iter, const TrainConfig& config);

/// Lesion mask (1xHxW or Nx1xHxW) to one-hot labels over two classes.
Tensor one_hot_labels(const Tensor& mask);

/// Mean over pixels and batch of -sum_i w_i y_i log(max(o_i, 1e-12)).
double weighted_ce_loss(const Tensor& probs, const Tensor& labels,
                        std::span<const double> class_weights);

struct TrainState {
  std::size_t iteration = 0;
  ParamSet params;
  ParamSet velocity;  // only used with momentum
  std::mt19937_64 sample_rng;
  std::mt19937_64 augment_rng;
  /// Exponential moving average of the batch loss.
  double running_loss = 0.0;
};

/// theta <- theta - lr * v with v = momentum * v + g. Every parameter needs
/// a gradient of matching shape.
void sgd_step(TrainState& state, const ParamSet& grads, double lr,
              double momentum = 0.0);

struct AugmentDraw {
  bool flip_h = false;
  bool flip_v = false;
  double scale = 1.0;
};

AugmentDraw draw_augment(std::mt19937_64& rng);

/// Flips, then rescales about the centre (bilinear image, nearest mask) and
/// centre-crops or edge-pads back to the original size.
std::pair<Tensor, Tensor> apply_augment(const Tensor& image, const Tensor& mask,
                                        const AugmentDraw& draw);

std::pair<Tensor, Tensor> augment(const Tensor& image, const Tensor& mask,
                                  std::mt19937_64& rng);

/// Stacks CxHxW tensors into NxCxHxW.
Tensor stack_batch(std::span<const Tensor> items);

struct LossRecord {
  std::size_t iter = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  TrainState state;
  std::vector<LossRecord> log;
};

using TrainProgress = std::function<void(const LossRecord&)>;

/// Runs max_iter SGD steps on seeded mini-batches. Parameters come from
/// `init` when given, otherwise from init_model(model, seed).
TrainResult train(const std::vector<Sample>& dataset, const ModelConfig& model,
                  const TrainConfig& config, const ParamSet* init = nullptr,
                  const TrainProgress& progress = {});

/// CSV with header "iter,lr,loss"; doubles printed round-trip exact.
void write_loss_log(const std::filesystem::path& path,
                    std::span<const LossRecord> log);

}  // namespace dermseg
