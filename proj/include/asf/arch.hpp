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

#include <string>
#include <vector>

#include <json.hpp>

#include "asf/common.hpp"
#include "asf/tensor_ops.hpp"

namespace asf {

/// Residual block internals. The bottleneck is always three convolutions
/// (reduce, middle, expand); the kind selects the middle kernels:
///   kFreqOnly    1x1 -> 1x3 -> 1x1          (frequency-only)
///   kSeparableTF 3x1 -> 1x3 -> 1x1          (time kernel, then frequency)
///   kPlain2d     1x1 -> 3x3 -> 1x1          (joint time-frequency)
enum class BlockKind { kFreqOnly, kSeparableTF, kPlain2d };

inline std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::kFreqOnly: return "freq_only";
    case BlockKind::kSeparableTF: return "separable_tf";
    case BlockKind::kPlain2d: return "plain_2d";
  }
  return "?";
}

inline BlockKind block_kind_from_string(const std::string& s) {
  if (s == "freq_only") return BlockKind::kFreqOnly;
  if (s == "separable_tf") return BlockKind::kSeparableTF;
  if (s == "plain_2d") return BlockKind::kPlain2d;
  fail("unknown block kind '", s, "'");
}

struct StageSpec {
  std::string name;                  // res2, res3, ...
  int blocks = 0;
  std::int64_t bottleneck_channels = 0;
  std::int64_t out_channels = 0;
  BlockKind kind = BlockKind::kFreqOnly;
  int freq_stride = 1;               // applied in the stage's first block
};

struct Conv1Spec {
  std::int64_t out_channels = 0;
  int kt = 1, kf = 7;
  int stride_t = 2, stride_f = 2;
};

/// Declarative description of one pathway. alpha is the temporal stride
/// applied to the input spectrogram before conv1 (the "data layer"); beta is
/// the channel ratio between the wide and the thin pathway of a fused pair.
struct ArchSpec {
  std::string name;  // slow / fast / single
  int alpha = 1;
  int beta = 8;
  Conv1Spec conv1;
  Pool2dSpec pool1;
  std::vector<StageSpec> stages;
};

inline void to_json(nlohmann::json& j, const StageSpec& s) {
  j = nlohmann::json{{"name", s.name},
                     {"blocks", s.blocks},
                     {"bottleneck_channels", s.bottleneck_channels},
                     {"out_channels", s.out_channels},
                     {"kind", to_string(s.kind)},
                     {"freq_stride", s.freq_stride}};
}

inline void from_json(const nlohmann::json& j, StageSpec& s) {
  s.name = j.at("name").get<std::string>();
  s.blocks = j.at("blocks").get<int>();
  s.bottleneck_channels = j.at("bottleneck_channels").get<std::int64_t>();
  s.out_channels = j.at("out_channels").get<std::int64_t>();
  s.kind = block_kind_from_string(j.at("kind").get<std::string>());
  s.freq_stride = j.at("freq_stride").get<int>();
}

inline void to_json(nlohmann::json& j, const ArchSpec& a) {
  j = nlohmann::json{
      {"name", a.name},
      {"alpha", a.alpha},
      {"beta", a.beta},
      {"conv1",
       {{"out_channels", a.conv1.out_channels},
        {"kt", a.conv1.kt},
        {"kf", a.conv1.kf},
        {"stride_t", a.conv1.stride_t},
        {"stride_f", a.conv1.stride_f}}},
      {"pool1",
       {{"kt", a.pool1.kt},
        {"kf", a.pool1.kf},
        {"stride_t", a.pool1.stride_t},
        {"stride_f", a.pool1.stride_f},
        {"pad_t", a.pool1.pad_t},
        {"pad_f", a.pool1.pad_f}}},
      {"stages", a.stages}};
}

inline void from_json(const nlohmann::json& j, ArchSpec& a) {
  a.name = j.at("name").get<std::string>();
  a.alpha = j.at("alpha").get<int>();
  a.beta = j.at("beta").get<int>();
  const auto& c = j.at("conv1");
  a.conv1.out_channels = c.at("out_channels").get<std::int64_t>();
  a.conv1.kt = c.at("kt").get<int>();
  a.conv1.kf = c.at("kf").get<int>();
  a.conv1.stride_t = c.at("stride_t").get<int>();
  a.conv1.stride_f = c.at("stride_f").get<int>();
  const auto& p = j.at("pool1");
  a.pool1.kt = p.at("kt").get<int>();
  a.pool1.kf = p.at("kf").get<int>();
  a.pool1.stride_t = p.at("stride_t").get<int>();
  a.pool1.stride_f = p.at("stride_f").get<int>();
  a.pool1.pad_t = p.at("pad_t").get<int>();
  a.pool1.pad_f = p.at("pad_f").get<int>();
  a.stages = j.at("stages").get<std::vector<StageSpec>>();
}

namespace detail {

inline std::int64_t scaled_channels(std::int64_t c, int width_div,
                                    const char* what) {
  check(width_div >= 1, "width divisor must be >= 1");
  check(c % width_div == 0, what, ": ", c, " channels not divisible by ",
        width_div);
  const std::int64_t s = c / width_div;
  check(s >= 1, what, ": width divisor ", width_div, " leaves no channels");
  return s;
}

}  // namespace detail

/// Wide pathway: strided input, frequency-only blocks in res2/res3, time
/// kernels only in res4/res5. res4_blocks is 6 for the 50-layer network and
/// 23 for the 101-layer variant.
inline ArchSpec slow_pathway(int width_div = 1, int res4_blocks = 6,
                             int alpha = 4, int beta = 8) {
  const auto ch = [width_div](std::int64_t c) {
    return detail::scaled_channels(c, width_div, "slow pathway");
  };
  ArchSpec a;
  a.name = "slow";
  a.alpha = alpha;
  a.beta = beta;
  a.conv1 = {ch(64), 1, 7, 2, 2};
  a.pool1 = Pool2dSpec{};
  a.stages = {
      {"res2", 3, ch(64), ch(256), BlockKind::kFreqOnly, 1},
      {"res3", 4, ch(128), ch(512), BlockKind::kFreqOnly, 2},
      {"res4", res4_blocks, ch(256), ch(1024), BlockKind::kSeparableTF, 2},
      {"res5", 3, ch(512), ch(2048), BlockKind::kSeparableTF, 2},
  };
  return a;
}

/// Thin pathway: full temporal resolution, beta-times fewer channels, time
/// kernels in conv1 and every stage.
inline ArchSpec fast_pathway(int width_div = 1, int beta = 8) {
  const auto ch = [width_div, beta](std::int64_t c) {
    return detail::scaled_channels(c / beta, width_div, "fast pathway");
  };
  ArchSpec a;
  a.name = "fast";
  a.alpha = 1;
  a.beta = beta;
  a.conv1 = {ch(64), 5, 7, 2, 2};
  a.pool1 = Pool2dSpec{};
  a.stages = {
      {"res2", 3, ch(64), ch(256), BlockKind::kSeparableTF, 1},
      {"res3", 4, ch(128), ch(512), BlockKind::kSeparableTF, 2},
      {"res4", 6, ch(256), ch(1024), BlockKind::kSeparableTF, 2},
      {"res5", 3, ch(512), ch(2048), BlockKind::kSeparableTF, 2},
  };
  return a;
}

/// Single-stream 50-layer variants on the slow schedule at full width, with
/// either joint 3x3 middle convolutions or separable ones in every stage.
inline ArchSpec single_resnet50(BlockKind kind, int width_div = 1) {
  ArchSpec a = slow_pathway(width_div);
  a.name = "single";
  for (auto& s : a.stages) s.kind = kind;
  return a;
}

enum class Variant {
  kSlowFast,
  kSlowOnly,
  kFastOnly,
  kTwoSlowLateFusion,
  kSlowResNet101,
  kSlowFastLateFusion,
  kResNet50Plain,
  kResNet50Separable,
};

inline const std::vector<std::pair<Variant, std::string>>& variant_names() {
  static const std::vector<std::pair<Variant, std::string>> names = {
      {Variant::kSlowFast, "slow_fast"},
      {Variant::kSlowOnly, "slow_only"},
      {Variant::kFastOnly, "fast_only"},
      {Variant::kTwoSlowLateFusion, "two_slow_late_fusion"},
      {Variant::kSlowResNet101, "slow_resnet101"},
      {Variant::kSlowFastLateFusion, "slow_fast_late_fusion"},
      {Variant::kResNet50Plain, "resnet50_plain"},
      {Variant::kResNet50Separable, "resnet50_separable"},
  };
  return names;
}

inline std::string to_string(Variant v) {
  for (const auto& [var, name] : variant_names()) {
    if (var == v) return name;
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (const auto& [var, name] : variant_names()) {
    if (name == s) return var;
  }
  std::string all;
  for (const auto& [var, name] : variant_names()) {
    if (!all.empty()) all += ", ";
    all += name;
  }
  fail("unknown variant '", s, "' (expected one of: ", all, ")");
}

}  // namespace asf
