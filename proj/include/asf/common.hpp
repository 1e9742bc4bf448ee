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

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace asf {

/// Library-wide error type. Everything that can fail throws this (or a
/// subclass) with a human-readable message; the CLI turns it into
/// machine-readable diagnostics and a nonzero exit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void msg_append(std::ostringstream&) {}

template <typename T, typename... Rest>
void msg_append(std::ostringstream& oss, T&& head, Rest&&... rest) {
  oss << std::forward<T>(head);
  msg_append(oss, std::forward<Rest>(rest)...);
}

}  // namespace detail

template <typename... Parts>
std::string msg(Parts&&... parts) {
  std::ostringstream oss;
  detail::msg_append(oss, std::forward<Parts>(parts)...);
  return oss.str();
}

template <typename... Parts>
[[noreturn]] void fail(Parts&&... parts) {
  throw Error(msg(std::forward<Parts>(parts)...));
}

template <typename... Parts>
void check(bool cond, Parts&&... parts) {
  if (!cond) {
    fail(std::forward<Parts>(parts)...);
  }
}

}  // namespace asf
