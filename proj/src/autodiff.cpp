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

#include "dermseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

namespace dermseg {
namespace {

Var make_node(OpKind kind, Tensor value, std::vector<Var> inputs,
              std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->value = std::move(value);
  node->requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                    [](const Var& v) { return v.requires_grad(); });
  if (node->requires_grad) {
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + to_string(a.shape()) +
                     " does not match " + to_string(b.shape()));
  }
}

// Post-order over nodes that require gradients, iterative to stay clear of
// deep recursion on long chains.
std::vector<Node*> topological_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = &node->inputs[next++].node();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kConvTranspose2d: return "conv_transpose2d";
    case OpKind::kConcat: return "concat_channels";
    case OpKind::kSlice: return "slice_channels";
    case OpKind::kRelu: return "relu";
    case OpKind::kMaxPool: return "max_pool2d";
    case OpKind::kSoftmax: return "softmax_channels";
    case OpKind::kWindowedMean: return "windowed_mean";
    case OpKind::kLocalVariance: return "local_variance";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kExp: return "exp";
    case OpKind::kSum: return "sum";
    case OpKind::kWeightedCrossEntropy: return "weighted_cross_entropy";
    case OpKind::kDetach: return "detach";
  }
  return "unknown";
}

void Node::accumulate(Tensor g) {
  if (!requires_grad) return;
  if (g.shape() != value.shape()) {
    throw ShapeError("gradient shape " + to_string(g.shape()) +
                     " does not match value shape " + to_string(value.shape()));
  }
  if (grad) {
    *grad += g;
  } else {
    grad = std::move(g);
  }
}

Var parameter(Tensor value, std::string name) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->parameter = true;
  node->name = std::move(name);
  return Var(std::move(node));
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

namespace ad {

Var conv2d(const Var& input, const Var& kernel, const Var& bias,
           const ConvGeometry& geometry) {
  Tensor out = dermseg::conv2d(input.value(),
                               ConvParams{kernel.value(), bias.value(), geometry});
  return make_node(OpKind::kConv2d, std::move(out), {input, kernel, bias},
                   [geometry](Node& self) {
                     Node& x = self.inputs[0].node();
                     Node& k = self.inputs[1].node();
                     Node& b = self.inputs[2].node();
                     const Tensor& g = *self.grad;
                     if (x.requires_grad) {
                       x.accumulate(detail::conv2d_input_grad(
                           g, k.value, geometry, x.value.shape()));
                     }
                     if (k.requires_grad || b.requires_grad) {
                       Tensor gk = Tensor::like(k.value);
                       Tensor gb = Tensor::like(b.value);
                       detail::conv2d_param_grad(x.value, g, geometry, gk, &gb);
                       k.accumulate(std::move(gk));
                       b.accumulate(std::move(gb));
                     }
                   });
}

Var conv_transpose2d(const Var& input, const Var& kernel, const Var& bias,
                     const ConvGeometry& geometry) {
  Tensor out = dermseg::conv_transpose2d(
      input.value(), ConvParams{kernel.value(), bias.value(), geometry});
  return make_node(
      OpKind::kConvTranspose2d, std::move(out), {input, kernel, bias},
      [geometry](Node& self) {
        Node& y = self.inputs[0].node();
        Node& k = self.inputs[1].node();
        Node& b = self.inputs[2].node();
        const Tensor& g = *self.grad;
        if (y.requires_grad) {
          const Tensor zero_bias(Shape{k.value.dim(0)});
          y.accumulate(dermseg::conv2d(g, ConvParams{k.value, zero_bias, geometry}));
        }
        if (k.requires_grad) {
          Tensor gk = Tensor::like(k.value);
          detail::conv2d_param_grad(g, y.value, geometry, gk, nullptr);
          k.accumulate(std::move(gk));
        }
        if (b.requires_grad) {
          const ImageDims d = image_dims(g, "conv_transpose2d");
          Tensor gb = Tensor::like(b.value);
          for (std::size_t n = 0; n < d.n; ++n) {
            for (std::size_t c = 0; c < d.c; ++c) {
              const double* p = g.data().data() + n * d.image() + c * d.plane();
              gb[c] += std::accumulate(p, p + d.plane(), 0.0);
            }
          }
          b.accumulate(std::move(gb));
        }
      });
}

Var concat_channels(std::span<const Var> parts) {
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const Var& p : parts) values.push_back(p.value());
  Tensor out = dermseg::concat_channels(values);
  return make_node(OpKind::kConcat, std::move(out),
                   std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
                     std::size_t begin = 0;
                     for (Var& in : self.inputs) {
                       const std::size_t c = image_dims(in.value(), "concat").c;
                       if (in.requires_grad()) {
                         in.node().accumulate(slice_channels(*self.grad, begin, c));
                       }
                       begin += c;
                     }
                   });
}

Var slice_channels(const Var& input, std::size_t begin, std::size_t count) {
  Tensor out = dermseg::slice_channels(input.value(), begin, count);
  return make_node(OpKind::kSlice, std::move(out), {input},
                   [begin, count](Node& self) {
                     Node& x = self.inputs[0].node();
                     const ImageDims d = image_dims(x.value, "slice_channels");
                     Tensor gx = Tensor::like(x.value);
                     const Tensor& g = *self.grad;
                     for (std::size_t n = 0; n < d.n; ++n) {
                       const double* src = g.data().data() + n * count * d.plane();
                       std::copy(src, src + count * d.plane(),
                                 gx.data().data() + n * d.image() +
                                     begin * d.plane());
                     }
                     x.accumulate(std::move(gx));
                   });
}

Var relu(const Var& input) {
  return make_node(OpKind::kRelu, dermseg::relu(input.value()), {input},
                   [](Node& self) {
                     Node& x = self.inputs[0].node();
                     Tensor gx = *self.grad;
                     for (std::size_t i = 0; i < gx.size(); ++i) {
                       if (x.value[i] <= 0.0) gx[i] = 0.0;
                     }
                     x.accumulate(std::move(gx));
                   });
}

Var max_pool2d(const Var& input, std::size_t window, std::size_t stride) {
  PoolResult r = dermseg::max_pool2d(input.value(), window, stride);
  return make_node(OpKind::kMaxPool, std::move(r.output), {input},
                   [argmax = std::move(r.argmax)](Node& self) {
                     Node& x = self.inputs[0].node();
                     Tensor gx = Tensor::like(x.value);
                     const Tensor& g = *self.grad;
                     for (std::size_t i = 0; i < argmax.size(); ++i) {
                       gx[argmax[i]] += g[i];
                     }
                     x.accumulate(std::move(gx));
                   });
}

Var softmax_channels(const Var& input) {
  Tensor out = dermseg::softmax_channels(input.value());
  return make_node(OpKind::kSoftmax, std::move(out), {input}, [](Node& self) {
    Node& x = self.inputs[0].node();
    const Tensor& s = self.value;
    const Tensor& g = *self.grad;
    const ImageDims d = image_dims(s, "softmax_channels");
    Tensor gx = Tensor::like(s);
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t base = n * d.image();
      for (std::size_t p = 0; p < d.plane(); ++p) {
        double inner = 0.0;
        for (std::size_t c = 0; c < d.c; ++c) {
          const std::size_t i = base + c * d.plane() + p;
          inner += g[i] * s[i];
        }
        for (std::size_t c = 0; c < d.c; ++c) {
          const std::size_t i = base + c * d.plane() + p;
          gx[i] = s[i] * (g[i] - inner);
        }
      }
    }
    x.accumulate(std::move(gx));
  });
}

Var windowed_mean(const Var& input, std::size_t window) {
  return make_node(OpKind::kWindowedMean,
                   dermseg::windowed_mean(input.value(), window), {input},
                   [window](Node& self) {
                     self.inputs[0].node().accumulate(
                         detail::windowed_mean_adjoint(*self.grad, window));
                   });
}

Var local_variance(const Var& input, std::size_t window) {
  return make_node(OpKind::kLocalVariance,
                   dermseg::local_variance(input.value(), window), {input},
                   [window](Node& self) {
                     Node& x = self.inputs[0].node();
                     x.accumulate(
                         detail::local_variance_grad(x.value, *self.grad, window));
                   });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_node(OpKind::kAdd, a.value() + b.value(), {a, b}, [](Node& self) {
    self.inputs[0].node().accumulate(*self.grad);
    self.inputs[1].node().accumulate(*self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_node(OpKind::kSub, a.value() - b.value(), {a, b}, [](Node& self) {
    self.inputs[0].node().accumulate(*self.grad);
    self.inputs[1].node().accumulate(*self.grad * -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_node(OpKind::kMul, std::move(out), {a, b}, [](Node& self) {
    Node& x = self.inputs[0].node();
    Node& y = self.inputs[1].node();
    const Tensor& g = *self.grad;
    if (x.requires_grad) {
      Tensor gx = g;
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= y.value[i];
      x.accumulate(std::move(gx));
    }
    if (y.requires_grad) {
      Tensor gy = g;
      for (std::size_t i = 0; i < gy.size(); ++i) gy[i] *= x.value[i];
      y.accumulate(std::move(gy));
    }
  });
}

Var scale(const Var& a, double s) {
  return make_node(OpKind::kScale, a.value() * s, {a}, [s](Node& self) {
    self.inputs[0].node().accumulate(*self.grad * s);
  });
}

Var exp(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::exp(v);
  return make_node(OpKind::kExp, std::move(out), {a}, [](Node& self) {
    Tensor g = *self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= self.value[i];
    self.inputs[0].node().accumulate(std::move(g));
  });
}

Var sum(const Var& a) {
  return make_node(OpKind::kSum, Tensor::scalar(dermseg::sum(a.value())), {a},
                   [](Node& self) {
                     Node& x = self.inputs[0].node();
                     x.accumulate(Tensor::like(x.value, (*self.grad)[0]));
                   });
}

Var detach(const Var& a) { return constant(a.value()); }

Var weighted_cross_entropy(const Var& probs, const Tensor& labels,
                           std::span<const double> class_weights,
                           double prob_floor) {
  if (probs.shape() != labels.shape()) {
    throw ShapeError("weighted_cross_entropy: labels " +
                     to_string(labels.shape()) + " do not match probabilities " +
                     to_string(probs.shape()));
  }
  const ImageDims d = image_dims(labels, "weighted_cross_entropy");
  if (class_weights.size() != d.c) {
    throw ShapeError("weighted_cross_entropy: " +
                     std::to_string(class_weights.size()) +
                     " class weights for " + std::to_string(d.c) + " channels");
  }
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t p = 0; p < d.plane(); ++p) {
      double total = 0.0;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double y = labels[n * d.image() + c * d.plane() + p];
        if (y != 0.0 && y != 1.0) {
          throw ValueError("weighted_cross_entropy: labels are not one-hot");
        }
        total += y;
      }
      if (total != 1.0) {
        throw ValueError("weighted_cross_entropy: labels are not one-hot");
      }
    }
  }
  const double norm = 1.0 / static_cast<double>(d.n * d.plane());
  const std::vector<double> weights(class_weights.begin(), class_weights.end());
  const Tensor& o = probs.value();
  double loss = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (labels[i] == 0.0) continue;
    const std::size_t c = (i / d.plane()) % d.c;
    loss -= weights[c] * std::log(std::max(o[i], prob_floor));
  }
  return make_node(OpKind::kWeightedCrossEntropy, Tensor::scalar(loss * norm),
                   {probs},
                   [labels, weights, norm, prob_floor, d](Node& self) {
                     Node& x = self.inputs[0].node();
                     Tensor gx = Tensor::like(x.value);
                     const double g = (*self.grad)[0] * norm;
                     for (std::size_t i = 0; i < gx.size(); ++i) {
                       if (labels[i] == 0.0 || x.value[i] < prob_floor) continue;
                       const std::size_t c = (i / d.plane()) % d.c;
                       gx[i] = -g * weights[c] / x.value[i];
                     }
                     x.accumulate(std::move(gx));
                   });
}

}  // namespace ad

GradMap backward(const Var& root) {
  if (!root) throw ValueError("backward: null root");
  if (root.value().size() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " +
                     to_string(root.shape()));
  }
  GradMap result;
  if (!root.requires_grad()) return result;
  const std::vector<Node*> order = topological_order(&root.node());
  for (Node* n : order) n->grad.reset();
  root.node().grad = Tensor::like(root.value(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->grad) continue;
    if (n->backward_fn) n->backward_fn(*n);
    if (n->parameter) result.emplace(n, *n->grad);
  }
  return result;
}

std::vector<Tensor> gradients(const Var& root, std::span<const Var> wrt) {
  const GradMap grads = backward(root);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Var& v : wrt) {
    auto it = grads.find(v.get());
    out.push_back(it != grads.end() ? it->second : Tensor::like(v.value()));
  }
  return out;
}

GradCheckResult grad_check(const std::function<Var(const Var&)>& builder,
                           const Tensor& input, const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw ValueError("grad_check: eps must be > 0");
  const Var x = parameter(input, "input");
  const Var root = builder(x);
  const Var wrt[] = {x};
  const Tensor analytic = gradients(root, wrt).front();

  std::vector<std::size_t> probes(input.size());
  std::iota(probes.begin(), probes.end(), std::size_t{0});
  if (options.max_probes > 0 && options.max_probes < probes.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(probes.begin(), probes.end(), rng);
    probes.resize(options.max_probes);
    std::sort(probes.begin(), probes.end());
  }

  auto eval = [&](const Tensor& t) {
    return builder(constant(t)).value().item();
  };
  GradCheckResult result;
  result.probes = probes.size();
  Tensor probe = input;
  for (std::size_t i : probes) {
    const double orig = probe[i];
    probe[i] = orig + options.eps;
    const double plus = eval(probe);
    probe[i] = orig - options.eps;
    const double minus = eval(probe);
    probe[i] = orig;
    const double numeric = (plus - minus) / (2.0 * options.eps);
    const double a = analytic[i];
    const double rel =
        std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    result.max_relative_error = std::max(result.max_relative_error, rel);
  }
  return result;
}

}  // namespace dermseg
