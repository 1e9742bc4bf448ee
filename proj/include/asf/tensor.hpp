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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <utility>
#include <vector>

#include "asf/common.hpp"
#include "asf/rng.hpp"

namespace asf {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (const auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Dense row-major real tensor. Feature maps use the N x C x T x F layout
/// (batch, channels, time, frequency); classifier activations are N x C.
/// The grad buffer, when enabled, always mirrors the value shape.
template <typename R>
struct Tensor {
  static_assert(std::is_floating_point_v<R>, "Tensor is real-valued");

  Shape shape;
  std::vector<R> data;
  bool requires_grad = false;
  std::vector<R> grad;  // empty unless enable_grad() was called

  Tensor() = default;
  explicit Tensor(Shape s, R fill = R(0))
      : shape(std::move(s)),
        data(static_cast<std::size_t>(shape_numel(shape)), fill) {}

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor from(Shape s, std::vector<R> values) {
    check(shape_numel(s) == static_cast<std::int64_t>(values.size()),
          "tensor data size ", values.size(), " does not match shape ",
          shape_str(s));
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    return t;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::size_t rank() const { return shape.size(); }
  std::int64_t dim(std::size_t i) const { return shape[i]; }

  void enable_grad() {
    requires_grad = true;
    grad.assign(data.size(), R(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), R(0)); }

  // N x C x T x F element access (bounds unchecked; hot paths use raw offsets)
  std::int64_t off4(std::int64_t n, std::int64_t c, std::int64_t t,
                    std::int64_t f) const {
    return ((n * shape[1] + c) * shape[2] + t) * shape[3] + f;
  }
  R& at4(std::int64_t n, std::int64_t c, std::int64_t t, std::int64_t f) {
    return data[static_cast<std::size_t>(off4(n, c, t, f))];
  }
  R at4(std::int64_t n, std::int64_t c, std::int64_t t, std::int64_t f) const {
    return data[static_cast<std::size_t>(off4(n, c, t, f))];
  }
  R& at2(std::int64_t i, std::int64_t j) {
    return data[static_cast<std::size_t>(i * shape[1] + j)];
  }
  R at2(std::int64_t i, std::int64_t j) const {
    return data[static_cast<std::size_t>(i * shape[1] + j)];
  }

  bool all_finite() const {
    for (const R v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) {
      out.data[i] = static_cast<U>(data[i]);
    }
    return out;
  }

  void fill_normal(Rng& rng, R stddev) {
    for (auto& v : data) v = static_cast<R>(rng.normal() * stddev);
  }
};

template <typename R>
bool same_shape(const Tensor<R>& a, const Tensor<R>& b) {
  return a.shape == b.shape;
}

template <typename R>
void check_shape(const Tensor<R>& t, const Shape& expect, const char* what) {
  check(t.shape == expect, what, ": shape ", shape_str(t.shape),
        " does not match expected ", shape_str(expect));
}

/// a += b, elementwise.
template <typename R>
void add_into(std::vector<R>& a, const std::vector<R>& b) {
  check(a.size() == b.size(), "add_into: size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename R>
void assert_finite(const Tensor<R>& t, const char* what) {
  check(t.all_finite(), what, ": non-finite value encountered");
}

}  // namespace asf
