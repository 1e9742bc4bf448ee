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

#include <cmath>
#include <cstdint>
#include <vector>

#include "asf/common.hpp"
#include "asf/tensor.hpp"

namespace asf {

/// One parameter as seen by the optimizer.
template <typename R>
struct ParamRef {
  R* value = nullptr;
  const R* grad = nullptr;
  std::int64_t size = 0;
};

/// SGD with momentum and decoupled-from-nothing weight decay:
///   v <- mu * v + (g + lambda * w);  w <- w - lr * v
/// Decay is applied to every trainable parameter. Velocity buffers persist
/// across steps and are indexed by parameter position, so the parameter list
/// must keep a stable order.
template <typename R>
struct SgdMomentum {
  R lr = R(0.01);
  R momentum = R(0.9);
  R weight_decay = R(1e-4);
  std::vector<std::vector<R>> velocity;
  std::int64_t last_step_scalars = 0;  // trainable scalars touched last step

  void step(const std::vector<ParamRef<R>>& params) {
    if (velocity.empty()) {
      velocity.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i].assign(static_cast<std::size_t>(params[i].size), R(0));
      }
    }
    check(velocity.size() == params.size(),
          "sgd_step: parameter list changed size");
    last_step_scalars = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& p = params[i];
      check(static_cast<std::int64_t>(velocity[i].size()) == p.size,
            "sgd_step: parameter ", i, " changed shape");
      R* v = velocity[i].data();
      for (std::int64_t j = 0; j < p.size; ++j) {
        const R g = p.grad[j] + weight_decay * p.value[j];
        check(std::isfinite(g), "sgd_step: non-finite gradient");
        v[j] = momentum * v[j] + g;
        p.value[j] -= lr * v[j];
      }
      last_step_scalars += p.size;
    }
  }
};

}  // namespace asf
