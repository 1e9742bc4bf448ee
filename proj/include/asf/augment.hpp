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

#include "asf/common.hpp"
#include "asf/dsp.hpp"
#include "asf/rng.hpp"

namespace asf {

/// Training-time spectrogram augmentation: frequency masks, time masks and a
/// piecewise-linear time warp. All randomness flows through the caller's Rng,
/// so a fixed seed fully determines the result.
struct AugmentConfig {
  int n_freq_masks = 2;
  int freq_mask_param = 27;  // F: mask width drawn from {0..F}
  int n_time_masks = 2;
  int time_mask_param = 25;  // T: mask width drawn from {0..T}
  int time_warp_w = 5;       // W: max anchor displacement
  bool enabled = true;
};

namespace detail {

inline float spec_mean(const Spectrogram& spec) {
  double acc = 0.0;
  for (const float v : spec.values) acc += v;
  return static_cast<float>(acc / static_cast<double>(spec.values.size()));
}

}  // namespace detail

/// Masks `n_freq_masks` random mel bands [f0, f0 + f) with the whole-input
/// mean, f ~ U{0..F}, f0 ~ U{0..n_mels - f}.
inline Spectrogram freq_mask(const Spectrogram& spec, const AugmentConfig& cfg,
                             Rng& rng) {
  Spectrogram out = spec;
  if (cfg.freq_mask_param <= 0 || cfg.n_freq_masks <= 0) return out;
  check(cfg.freq_mask_param < spec.n_mels,
        "freq_mask: F must be smaller than the mel count");
  const float fill = detail::spec_mean(spec);
  for (int k = 0; k < cfg.n_freq_masks; ++k) {
    const std::int64_t f = rng.uniform_range(0, cfg.freq_mask_param);
    const std::int64_t f0 = rng.uniform_range(0, spec.n_mels - f);
    if (f == 0) continue;
    for (std::int64_t t = 0; t < out.n_frames; ++t) {
      for (std::int64_t m = f0; m < f0 + f; ++m) out.at(t, m) = fill;
    }
  }
  return out;
}

/// Same contract along the time axis with bound T.
inline Spectrogram time_mask(const Spectrogram& spec, const AugmentConfig& cfg,
                             Rng& rng) {
  Spectrogram out = spec;
  if (cfg.time_mask_param <= 0 || cfg.n_time_masks <= 0) return out;
  check(cfg.time_mask_param < spec.n_frames,
        "time_mask: T must be smaller than the frame count");
  const float fill = detail::spec_mean(spec);
  for (int k = 0; k < cfg.n_time_masks; ++k) {
    const std::int64_t t_len = rng.uniform_range(0, cfg.time_mask_param);
    const std::int64_t t0 = rng.uniform_range(0, spec.n_frames - t_len);
    if (t_len == 0) continue;
    for (std::int64_t t = t0; t < t0 + t_len; ++t) {
      for (std::int64_t m = 0; m < out.n_mels; ++m) out.at(t, m) = fill;
    }
  }
  return out;
}

/// Deterministic warp core: remaps the time axis so the anchor frame t0
/// lands on t0 + w, with frames 0 and T-1 fixed and linear interpolation
/// between source neighbours. w == 0 is the identity.
inline Spectrogram time_warp_at(const Spectrogram& spec, std::int64_t t0,
                                std::int64_t w) {
  const std::int64_t frames = spec.n_frames;
  check(t0 >= 1 && t0 <= frames - 2, "time_warp: anchor ", t0,
        " outside (0, ", frames - 1, ")");
  if (w == 0) return spec;
  const std::int64_t target = std::clamp<std::int64_t>(t0 + w, 1, frames - 2);

  Spectrogram out = spec;
  const double last = static_cast<double>(frames - 1);
  for (std::int64_t t = 1; t < frames - 1; ++t) {
    double src;
    if (t <= target) {
      src = static_cast<double>(t) * static_cast<double>(t0) /
            static_cast<double>(target);
    } else {
      src = static_cast<double>(t0) +
            (static_cast<double>(t) - static_cast<double>(target)) *
                (last - static_cast<double>(t0)) /
                (last - static_cast<double>(target));
    }
    const auto lo = static_cast<std::int64_t>(std::floor(src));
    const std::int64_t hi = std::min<std::int64_t>(lo + 1, frames - 1);
    const auto frac = static_cast<float>(src - static_cast<double>(lo));
    for (std::int64_t m = 0; m < spec.n_mels; ++m) {
      out.at(t, m) =
          (1.0f - frac) * spec.at(lo, m) + frac * spec.at(hi, m);
    }
  }
  return out;
}

/// Random warp: anchor t0 ~ U{W..T-1-W}, shift w ~ U{-W..W}.
inline Spectrogram time_warp(const Spectrogram& spec, const AugmentConfig& cfg,
                             Rng& rng) {
  if (cfg.time_warp_w <= 0) return spec;
  const std::int64_t frames = spec.n_frames;
  const std::int64_t w_max = cfg.time_warp_w;
  check(frames > 2 * w_max, "time_warp: spectrogram of ", frames,
        " frames is too short for W=", w_max);
  const std::int64_t t0 = rng.uniform_range(w_max, frames - 1 - w_max);
  const std::int64_t w = rng.uniform_range(-w_max, w_max);
  return time_warp_at(spec, t0, w);
}

/// Full pipeline: warp, then frequency masks, then time masks. Disabled
/// config is the identity. Extents never change.
inline Spectrogram apply_augment(const Spectrogram& spec,
                                 const AugmentConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return spec;
  Spectrogram out = time_warp(spec, cfg, rng);
  out = freq_mask(out, cfg, rng);
  out = time_mask(out, cfg, rng);
  return out;
}

}  // namespace asf
