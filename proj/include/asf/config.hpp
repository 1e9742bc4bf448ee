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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "asf/arch.hpp"
#include "asf/augment.hpp"
#include "asf/common.hpp"
#include "asf/dsp.hpp"
#include "asf/train.hpp"

namespace asf {

/// Everything one run needs, composed from a single JSON document. Every
/// field has a default; the JSON only lists overrides. The ASF_CACHE_DIR
/// environment variable, when set, overrides paths.cache_dir.
struct RunConfig {
  int sample_rate = 24000;
  DspConfig dsp;

  std::string variant = "slow_fast";
  std::vector<int> num_classes = {8};
  int width_div = 1;

  TrainConfig train;
  std::string precision = "f32";  // f32 | f64

  int eval_segments = 10;

  std::filesystem::path manifest_path;
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path out_dir = "runs/default";
};

namespace detail {

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig cfg;
  if (j.contains("dsp")) {
    const auto& d = j.at("dsp");
    detail::maybe_get(d, "sample_rate", cfg.sample_rate);
    detail::maybe_get(d, "window_ms", cfg.dsp.window_ms);
    detail::maybe_get(d, "hop_ms", cfg.dsp.hop_ms);
    detail::maybe_get(d, "n_mels", cfg.dsp.n_mels);
    detail::maybe_get(d, "fft_size", cfg.dsp.fft_size);
    detail::maybe_get(d, "target_frames", cfg.dsp.target_frames);
    detail::maybe_get(d, "log_eps", cfg.dsp.log_eps);
  }
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    detail::maybe_get(a, "enabled", cfg.train.augment.enabled);
    detail::maybe_get(a, "n_freq_masks", cfg.train.augment.n_freq_masks);
    detail::maybe_get(a, "freq_mask_param", cfg.train.augment.freq_mask_param);
    detail::maybe_get(a, "n_time_masks", cfg.train.augment.n_time_masks);
    detail::maybe_get(a, "time_mask_param", cfg.train.augment.time_mask_param);
    detail::maybe_get(a, "time_warp_w", cfg.train.augment.time_warp_w);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::maybe_get(m, "variant", cfg.variant);
    detail::maybe_get(m, "num_classes", cfg.num_classes);
    detail::maybe_get(m, "width_div", cfg.width_div);
    detail::maybe_get(m, "dropout_p", cfg.train.dropout_p);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::maybe_get(t, "epochs", cfg.train.epochs);
    detail::maybe_get(t, "base_lr", cfg.train.base_lr);
    detail::maybe_get(t, "lr_drop_epochs", cfg.train.lr_drop_epochs);
    detail::maybe_get(t, "lr_drop_factor", cfg.train.lr_drop_factor);
    detail::maybe_get(t, "batch_size", cfg.train.batch_size);
    std::int64_t seed = static_cast<std::int64_t>(cfg.train.seed);
    detail::maybe_get(t, "seed", seed);
    cfg.train.seed = static_cast<std::uint64_t>(seed);
    detail::maybe_get(t, "finetune", cfg.train.finetune);
    detail::maybe_get(t, "eval_segments", cfg.train.eval_segments);
    detail::maybe_get(t, "precision", cfg.precision);
  }
  if (j.contains("eval")) {
    detail::maybe_get(j.at("eval"), "n_segments", cfg.eval_segments);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    std::string s;
    if (p.contains("manifest")) {
      s = p.at("manifest").get<std::string>();
      cfg.manifest_path = s;
    }
    if (p.contains("cache_dir")) {
      s = p.at("cache_dir").get<std::string>();
      cfg.cache_dir = s;
    }
    if (p.contains("out_dir")) {
      s = p.at("out_dir").get<std::string>();
      cfg.out_dir = s;
    }
  }

  if (const char* env = std::getenv("ASF_CACHE_DIR")) {
    if (*env != '\0') cfg.cache_dir = env;
  }

  check(cfg.precision == "f32" || cfg.precision == "f64",
        "config: precision must be f32 or f64");
  check(!cfg.num_classes.empty() && cfg.num_classes.size() <= 2,
        "config: num_classes must list 1 or 2 heads");
  check(cfg.dsp.target_frames > 0, "config: target_frames must be positive");
  variant_from_string(cfg.variant);  // validates the name
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  check(is.good(), "config: cannot open ", path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    fail("config: ", path.string(), " is not valid JSON: ", e.what());
  }
  return parse_run_config(j);
}

}  // namespace asf
