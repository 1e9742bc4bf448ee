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
#include <filesystem>
#include <string>
#include <vector>

#include "asf/common.hpp"
#include "asf/dsp.hpp"
#include "asf/manifest.hpp"
#include "asf/rng.hpp"

namespace asf {

// Synthetic benchmark corpus. Two class families probe the two network
// specializations:
//   - spectral classes: stationary harmonic stacks with class-specific
//     frequency signatures, under randomized slow amplitude modulation, so
//     only the spectral shape identifies the class;
//   - rhythm classes: click trains with class-specific repetition rates and
//     a per-clip randomized carrier, so only the temporal pattern identifies
//     the class.
// Distractor classes (broadband noise, near-silence) round out the roster.

struct SynthConfig {
  int n_classes = 8;
  int clips_per_class = 100;
  double seconds = 2.0;
  int sample_rate = 24000;
  double val_fraction = 0.2;
};

struct SynthClass {
  std::string name;
  std::string family;  // spectral | rhythm | distractor
  double tone_f0 = 0.0;
  std::vector<double> harmonic_amps;
  double click_rate_hz = 0.0;
  bool is_silence = false;
};

/// Deterministic class roster for a given class count (2..12): distractors
/// are added from 4 classes up, the rest alternates spectral/rhythm.
inline std::vector<SynthClass> synth_class_roster(int n_classes) {
  check(n_classes >= 2 && n_classes <= 12,
        "synth: class count must be in [2, 12]");
  const int n_distractor = n_classes >= 4 ? 2 : 0;
  const int remaining = n_classes - n_distractor;
  const int n_spectral = (remaining + 1) / 2;
  const int n_rhythm = remaining / 2;

  // harmonic amplitude templates cycle across spectral classes
  static const std::vector<std::vector<double>> kProfiles = {
      {1.0, 0.5, 0.25, 0.12},
      {1.0, 0.0, 0.7, 0.0, 0.4},
      {0.6, 1.0, 0.3},
      {1.0, 0.2, 0.6, 0.3},
  };

  std::vector<SynthClass> roster;
  for (int i = 0; i < n_spectral; ++i) {
    SynthClass c;
    c.name = "tone" + std::to_string(i);
    c.family = "spectral";
    c.tone_f0 = 280.0 * std::pow(2.35, i);
    c.harmonic_amps = kProfiles[i % kProfiles.size()];
    roster.push_back(std::move(c));
  }
  for (int i = 0; i < n_rhythm; ++i) {
    SynthClass c;
    c.name = "rhythm" + std::to_string(i);
    c.family = "rhythm";
    c.click_rate_hz = 8.0 * std::pow(1.62, i);
    roster.push_back(std::move(c));
  }
  if (n_distractor > 0) {
    SynthClass noise;
    noise.name = "noise";
    noise.family = "distractor";
    roster.push_back(std::move(noise));
    SynthClass silence;
    silence.name = "silence";
    silence.family = "distractor";
    silence.is_silence = true;
    roster.push_back(std::move(silence));
  }
  return roster;
}

namespace detail {

inline void apply_fade(std::vector<float>& s, int fade_samples) {
  const int n = static_cast<int>(s.size());
  const int f = std::min(fade_samples, n / 2);
  for (int i = 0; i < f; ++i) {
    const float g = static_cast<float>(i) / f;
    s[i] *= g;
    s[n - 1 - i] *= g;
  }
}

inline void normalize_peak(std::vector<float>& s, float peak) {
  float mx = 0.0f;
  for (const float v : s) mx = std::max(mx, std::abs(v));
  if (mx > 0.0f) {
    const float g = peak / mx;
    for (auto& v : s) v *= g;
  }
}

inline std::vector<float> synth_one_clip(const SynthClass& cls, int n_samples,
                                         int sample_rate, Rng& rng) {
  std::vector<float> s(static_cast<std::size_t>(n_samples), 0.0f);
  const double dt = 1.0 / sample_rate;
  const double dur = n_samples * dt;
  constexpr double kTau = 6.283185307179586476925286766559;

  if (cls.is_silence) {
    for (auto& v : s) v = static_cast<float>(0.0005 * rng.normal());
    return s;
  }

  if (cls.family == "spectral") {
    const double f0 = cls.tone_f0 * (1.0 + 0.12 * (rng.next_unit() - 0.5));
    std::vector<double> phases;
    for (std::size_t h = 0; h < cls.harmonic_amps.size(); ++h) {
      phases.push_back(kTau * rng.next_unit());
    }
    // randomized amplitude modulation hides every temporal cue
    const double am_rate = 0.5 + 5.5 * rng.next_unit();
    const double am_depth = 0.7 * rng.next_unit();
    const double am_phase = kTau * rng.next_unit();
    for (int i = 0; i < n_samples; ++i) {
      const double t = i * dt;
      double v = 0.0;
      for (std::size_t h = 0; h < cls.harmonic_amps.size(); ++h) {
        v += cls.harmonic_amps[h] *
             std::sin(kTau * f0 * (h + 1) * t + phases[h]);
      }
      const double am =
          1.0 - am_depth * (0.5 + 0.5 * std::sin(kTau * am_rate * t + am_phase));
      s[i] = static_cast<float>(v * am);
    }
    normalize_peak(s, 0.9f);
    for (auto& v : s) v += static_cast<float>(0.004 * rng.normal());
  } else if (cls.family == "rhythm") {
    // click train; the carrier is re-drawn per clip so the long-term
    // spectrum carries no class information
    const double ioi = 1.0 / cls.click_rate_hz;
    const bool tonal = rng.next_unit() < 0.5;
    const double carrier_hz =
        400.0 * std::pow(20.0, rng.next_unit());  // log-uniform 400..8000
    const double carrier_phase = kTau * rng.next_unit();
    const int burst_len = static_cast<int>(0.015 * sample_rate);
    double onset = rng.next_unit() * ioi;
    while (onset < dur) {
      const int start = static_cast<int>(onset * sample_rate);
      for (int k = 0; k < burst_len && start + k < n_samples; ++k) {
        const double t = k * dt;
        const double env = std::exp(-t / 0.004);
        double carrier;
        if (tonal) {
          carrier = std::sin(kTau * carrier_hz * (onset + t) + carrier_phase);
        } else {
          carrier = rng.normal() * 0.7;
        }
        s[static_cast<std::size_t>(start + k)] +=
            static_cast<float>(env * carrier);
      }
      onset += ioi * (1.0 + 0.16 * (rng.next_unit() - 0.5));
    }
    normalize_peak(s, 0.9f);
    for (auto& v : s) v += static_cast<float>(0.004 * rng.normal());
  } else {
    // broadband noise with a per-clip tilt between white and integrated noise
    const double mix = rng.next_unit();
    double brown = 0.0;
    std::vector<float> white(s.size()), low(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      white[i] = static_cast<float>(rng.normal());
      brown = 0.98 * brown + rng.normal();
      low[i] = static_cast<float>(brown);
    }
    normalize_peak(white, 1.0f);
    normalize_peak(low, 1.0f);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = static_cast<float>(mix * white[i] + (1.0 - mix) * low[i]);
    }
    normalize_peak(s, 0.9f);
  }

  const float gain = static_cast<float>(0.35 + 0.55 * rng.next_unit());
  for (auto& v : s) v *= gain;
  apply_fade(s, sample_rate / 20);  // 50 ms ramps kill onset/offset cues
  return s;
}

}  // namespace detail

/// Generates the corpus under out_dir (audio/*.wav plus manifest.csv) and
/// returns the manifest. Fully determined by (config, seed).
inline Manifest synth_dataset(const std::filesystem::path& out_dir,
                              const SynthConfig& cfg, std::uint64_t seed) {
  check(cfg.clips_per_class >= 2, "synth: need at least 2 clips per class");
  check(cfg.seconds > 0.1 && cfg.sample_rate >= 8000, "synth: bad clip shape");
  const auto roster = synth_class_roster(cfg.n_classes);
  std::filesystem::create_directories(out_dir / "audio");

  Manifest manifest;
  manifest.two_head = false;
  const int n_samples = static_cast<int>(cfg.seconds * cfg.sample_rate);
  const int n_val = std::max(
      1, static_cast<int>(std::lround(cfg.clips_per_class * cfg.val_fraction)));
  const int n_train = cfg.clips_per_class - n_val;
  check(n_train >= 1, "synth: val_fraction leaves no training clips");

  Rng master(seed);
  for (int c = 0; c < cfg.n_classes; ++c) {
    for (int i = 0; i < cfg.clips_per_class; ++i) {
      Rng clip_rng = master.fork(static_cast<std::uint64_t>(c) * 1000003 + i);
      const auto samples = detail::synth_one_clip(roster[c], n_samples,
                                                  cfg.sample_rate, clip_rng);
      const std::string clip_id =
          roster[c].name + "_" + std::to_string(i);
      const std::string rel = "audio/" + clip_id + ".wav";
      write_wav_pcm16(out_dir / rel, samples, cfg.sample_rate);

      ManifestRow row;
      row.clip_id = clip_id;
      row.audio_path = rel;
      row.start_s = 0.0;
      row.stop_s = cfg.seconds;
      row.labels = {c};
      row.split = i < n_train ? "train" : "val";
      row.tags = {"family:" + roster[c].family, "class:" + roster[c].name};
      manifest.rows.push_back(std::move(row));
    }
  }
  save_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace asf
