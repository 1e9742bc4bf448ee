/*
 * Copyright 2026 The asf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "asf/tensor.hpp"
#include "asf/tensor_ops.hpp"

namespace asf {

// Reverse-mode tape over the kernels in tensor_ops.hpp. Each op wraps a
// forward kernel and registers a closure that routes this node's gradient
// into its parents via the matching backward kernel. Values are immutable
// once produced; parameters are leaves that outlive the per-step graph.

template <typename R>
class Var;

template <typename R>
using VarPtr = std::shared_ptr<Var<R>>;

template <typename R>
class Var {
 public:
  Tensor<R> value;
  Tensor<R> grad;  // allocated on first accumulate
  bool requires_grad = false;
  std::vector<VarPtr<R>> parents;
  std::function<void(Var<R>&)> backward_fn;
  std::string name;

  void accumulate(const Tensor<R>& g) {
    if (grad.shape != value.shape) {
      grad = Tensor<R>(value.shape);
    }
    add_into(grad.data, g.data);
  }

  void ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor<R>(value.shape);
  }

  void zero_grad() {
    grad.shape = value.shape;
    grad.data.assign(value.data.size(), R(0));
  }
};

namespace ag {

template <typename R>
VarPtr<R> leaf(Tensor<R> value, bool requires_grad = false) {
  auto v = std::make_shared<Var<R>>();
  v->value = std::move(value);
  v->requires_grad = requires_grad;
  return v;
}

template <typename R>
VarPtr<R> param(Tensor<R> value, std::string name) {
  auto v = leaf(std::move(value), true);
  v->name = std::move(name);
  return v;
}

template <typename R>
VarPtr<R> make_node(Tensor<R> value, std::vector<VarPtr<R>> parents,
                    std::function<void(Var<R>&)> backward_fn) {
  auto v = std::make_shared<Var<R>>();
  v->value = std::move(value);
  v->parents = std::move(parents);
  for (const auto& p : v->parents) {
    if (p->requires_grad) {
      v->requires_grad = true;
      break;
    }
  }
  if (v->requires_grad) v->backward_fn = std::move(backward_fn);
  return v;
}

/// Runs reverse-mode accumulation from a scalar root (numel must be 1).
template <typename R>
void backward(const VarPtr<R>& root) {
  check(root->value.numel() == 1, "backward: root must be a scalar");
  std::vector<Var<R>*> order;
  std::unordered_set<Var<R>*> seen;
  // iterative post-order DFS
  std::vector<std::pair<Var<R>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Var<R>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.data[0] = R(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Var<R>* node = *it;
    if (node->backward_fn && node->grad.shape == node->value.shape) {
      node->backward_fn(*node);
    }
  }
}

template <typename R>
VarPtr<R> conv2d(VarPtr<R> x, VarPtr<R> weight, VarPtr<R> bias,
                 const Conv2dSpec& spec) {
  auto layer = std::make_shared<Conv2dLayer<R>>();
  layer->spec = spec;
  layer->weight = weight->value;
  if (spec.has_bias) layer->bias = bias->value;
  Tensor<R> y = conv2d_forward(x->value, *layer);
  std::vector<VarPtr<R>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node<R>(
      std::move(y), std::move(parents),
      [x, weight, bias, layer](Var<R>& self) {
        Tensor<R> gx;
        if (weight->requires_grad) weight->ensure_grad();
        if (bias && bias->requires_grad) bias->ensure_grad();
        conv2d_backward(self.grad, x->value, *layer,
                        x->requires_grad ? &gx : nullptr,
                        weight->requires_grad ? &weight->grad : nullptr,
                        (bias && bias->requires_grad) ? &bias->grad : nullptr);
        if (x->requires_grad) x->accumulate(gx);
      });
}

template <typename R>
VarPtr<R> maxpool2d(VarPtr<R> x, const Pool2dSpec& spec) {
  Tensor<R> y = maxpool2d_forward(x->value, spec);
  return make_node<R>(std::move(y), {x}, [x, spec](Var<R>& self) {
    x->accumulate(maxpool2d_backward(self.grad, x->value, spec));
  });
}

/// BatchNorm over a persistent layer. Train mode updates the layer's running
/// statistics in place; the cache needed by backward is captured by value.
template <typename R>
VarPtr<R> batchnorm(VarPtr<R> x, VarPtr<R> scale, VarPtr<R> shift,
                    BatchNormLayer<R>& layer, BnMode mode) {
  layer.scale = scale->value;
  layer.shift = shift->value;
  auto cache = std::make_shared<BnCache<R>>();
  Tensor<R> y = batchnorm_forward(x->value, layer, mode, cache.get());
  // snapshot what backward needs; the live layer may advance its stats
  auto scale_snapshot = std::make_shared<Tensor<R>>(scale->value);
  const R eps = layer.eps;
  const std::int64_t channels = layer.channels;
  return make_node<R>(
      std::move(y), {x, scale, shift},
      [x, scale, shift, cache, scale_snapshot, eps, channels](Var<R>& self) {
        BatchNormLayer<R> snap;
        snap.channels = channels;
        snap.eps = eps;
        snap.scale = *scale_snapshot;
        Tensor<R> gx;
        if (scale->requires_grad) scale->ensure_grad();
        if (shift->requires_grad) shift->ensure_grad();
        batchnorm_backward(self.grad, x->value, snap, *cache,
                           x->requires_grad ? &gx : nullptr,
                           scale->requires_grad ? &scale->grad : nullptr,
                           shift->requires_grad ? &shift->grad : nullptr);
        if (x->requires_grad) x->accumulate(gx);
      });
}

template <typename R>
VarPtr<R> relu(VarPtr<R> x) {
  return make_node<R>(relu_forward(x->value), {x}, [x](Var<R>& self) {
    x->accumulate(relu_backward(self.grad, x->value));
  });
}

template <typename R>
VarPtr<R> global_avg_pool(VarPtr<R> x) {
  return make_node<R>(global_avg_pool_forward(x->value), {x},
                      [x](Var<R>& self) {
                        x->accumulate(global_avg_pool_backward<R>(
                            self.grad, x->value.shape));
                      });
}

template <typename R>
VarPtr<R> linear(VarPtr<R> x, VarPtr<R> weight, VarPtr<R> bias) {
  auto layer = std::make_shared<LinearLayer<R>>();
  layer->weight = weight->value;
  layer->bias = bias->value;
  Tensor<R> y = linear_forward(x->value, *layer);
  return make_node<R>(
      std::move(y), {x, weight, bias}, [x, weight, bias, layer](Var<R>& self) {
        Tensor<R> gx;
        if (weight->requires_grad) weight->ensure_grad();
        if (bias->requires_grad) bias->ensure_grad();
        linear_backward(self.grad, x->value, *layer,
                        x->requires_grad ? &gx : nullptr,
                        weight->requires_grad ? &weight->grad : nullptr,
                        bias->requires_grad ? &bias->grad : nullptr);
        if (x->requires_grad) x->accumulate(gx);
      });
}

template <typename R>
VarPtr<R> dropout(VarPtr<R> x, R p, bool train, Rng& rng) {
  auto mask = std::make_shared<Tensor<R>>();
  Tensor<R> y = dropout_forward(x->value, p, train, rng, mask.get());
  return make_node<R>(std::move(y), {x}, [x, mask](Var<R>& self) {
    x->accumulate(dropout_backward(self.grad, *mask));
  });
}

template <typename R>
VarPtr<R> concat_channels(const std::vector<VarPtr<R>>& xs) {
  std::vector<const Tensor<R>*> values;
  values.reserve(xs.size());
  std::vector<Shape> shapes;
  for (const auto& x : xs) {
    values.push_back(&x->value);
    shapes.push_back(x->value.shape);
  }
  Tensor<R> y = concat_channels_forward(values);
  std::vector<VarPtr<R>> parents(xs.begin(), xs.end());
  return make_node<R>(std::move(y), std::move(parents),
                      [xs, shapes](Var<R>& self) {
                        auto grads =
                            concat_channels_backward(self.grad, shapes);
                        for (std::size_t i = 0; i < xs.size(); ++i) {
                          if (xs[i]->requires_grad) {
                            xs[i]->accumulate(grads[i]);
                          }
                        }
                      });
}

template <typename R>
VarPtr<R> subsample_time(VarPtr<R> x, int stride) {
  if (stride == 1) return x;
  Tensor<R> y = subsample_time_forward(x->value, stride);
  return make_node<R>(std::move(y), {x}, [x, stride](Var<R>& self) {
    x->accumulate(subsample_time_backward(self.grad, x->value.shape, stride));
  });
}

/// Reshape [N, C, 1, 1] to [N, C].
template <typename R>
VarPtr<R> flatten_pooled(VarPtr<R> x) {
  check(x->value.rank() == 4 && x->value.dim(2) == 1 && x->value.dim(3) == 1,
        "flatten_pooled: expected N x C x 1 x 1");
  Tensor<R> y = Tensor<R>::from({x->value.dim(0), x->value.dim(1)},
                                x->value.data);
  return make_node<R>(std::move(y), {x}, [x](Var<R>& self) {
    Tensor<R> g = Tensor<R>::from(x->value.shape, self.grad.data);
    x->accumulate(g);
  });
}

template <typename R>
VarPtr<R> softmax_cross_entropy(VarPtr<R> logits,
                                const std::vector<int>& labels) {
  auto probs = std::make_shared<Tensor<R>>();
  const R loss = softmax_cross_entropy_forward(logits->value, labels,
                                               probs.get());
  Tensor<R> out({1});
  out.data[0] = loss;
  return make_node<R>(std::move(out), {logits},
                      [logits, probs, labels](Var<R>& self) {
                        logits->accumulate(softmax_cross_entropy_backward(
                            self.grad.data[0], *probs, labels));
                      });
}

/// Mean of scalar nodes (used to combine per-head and per-stream losses).
template <typename R>
VarPtr<R> scalar_mean(const std::vector<VarPtr<R>>& xs) {
  check(!xs.empty(), "scalar_mean: no inputs");
  Tensor<R> out({1});
  for (const auto& x : xs) {
    check(x->value.numel() == 1, "scalar_mean: inputs must be scalars");
    out.data[0] += x->value.data[0];
  }
  out.data[0] /= static_cast<R>(xs.size());
  std::vector<VarPtr<R>> parents(xs.begin(), xs.end());
  return make_node<R>(std::move(out), std::move(parents), [xs](Var<R>& self) {
    const R share = self.grad.data[0] / static_cast<R>(xs.size());
    Tensor<R> g({1});
    g.data[0] = share;
    for (const auto& x : xs) {
      if (x->requires_grad) x->accumulate(g);
    }
  });
}

}  // namespace ag

}  // namespace asf
