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

// Define-by-run reverse-mode differentiation over Tensor values.
//
// Every op below records a Node holding its value, its parents, and a
// closure that pushes the node's gradient into the parents. Nodes are
// reference counted; dropping the root releases the whole graph.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dermseg/ops.hpp"
#include "dermseg/tensor.hpp"

namespace dermseg {

enum class OpKind {
  kLeaf,
  kConv2d,
  kConvTranspose2d,
  kConcat,
  kSlice,
  kRelu,
  kMaxPool,
  kSoftmax,
  kWindowedMean,
  kLocalVariance,
  kAdd,
  kSub,
  kMul,
  kScale,
  kExp,
  kSum,
  kWeightedCrossEntropy,
  kDetach,
};

const char* to_string(OpKind kind);

class Var;

struct Node {
  OpKind kind = OpKind::kLeaf;
  std::vector<Var> inputs;
  Tensor value;
  std::optional<Tensor> grad;
  /// Reads `grad` of the node it is called with and accumulates into the
  /// inputs that require gradients.
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool parameter = false;
  std::string name;

  void accumulate(Tensor g);
};

/// Shared handle to a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  Node& node() const { return *node_; }
  const Node* get() const { return node_.get(); }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf whose gradient backward() reports.
Var parameter(Tensor value, std::string name = {});
/// Leaf that never receives a gradient.
Var constant(Tensor value);

namespace ad {

Var conv2d(const Var& input, const Var& kernel, const Var& bias,
           const ConvGeometry& geometry);
Var conv_transpose2d(const Var& input, const Var& kernel, const Var& bias,
                     const ConvGeometry& geometry);
Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& input, std::size_t begin, std::size_t count);
Var relu(const Var& input);
Var max_pool2d(const Var& input, std::size_t window, std::size_t stride);
Var softmax_channels(const Var& input);
Var windowed_mean(const Var& input, std::size_t window);
Var local_variance(const Var& input, std::size_t window);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var exp(const Var& a);
/// Sum of all elements, shape (1).
Var sum(const Var& a);
/// Forwards the value, blocks the gradient.
Var detach(const Var& a);

/// -(1/N) sum_p sum_i w_i y_i^p log(max(o_i^p, floor)), averaged over the
/// batch. `labels` is one-hot with the same shape as `probs`.
Var weighted_cross_entropy(const Var& probs, const Tensor& labels,
                           std::span<const double> class_weights,
                           double prob_floor = 1e-12);

}  // namespace ad

using GradMap = std::unordered_map<const Node*, Tensor>;

/// Reverse sweep from a single-element root. Returns the gradient of every
/// parameter leaf reachable from the root.
GradMap backward(const Var& root);

/// Gradients for `wrt` in order; parameters the root does not depend on
/// get zeros.
std::vector<Tensor> gradients(const Var& root, std::span<const Var> wrt);

struct GradCheckOptions {
  double eps = 1e-5;
  /// Probe at most this many elements (0 = all), chosen by a seeded draw.
  std::size_t max_probes = 0;
  unsigned seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t probes = 0;
};

/// Compares d builder(x) / dx against central differences
/// (f(x + eps) - f(x - eps)) / (2 eps) elementwise, with relative error
/// |a - n| / max(1e-8, |a| + |n|).
GradCheckResult grad_check(const std::function<Var(const Var&)>& builder,
                           const Tensor& input,
                           const GradCheckOptions& options = {});

}  // namespace dermseg
