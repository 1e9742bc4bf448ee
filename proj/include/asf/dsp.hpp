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
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "asf/common.hpp"
#include "asf/tensor.hpp"

namespace asf {

// ---------------------------------------------------------------------------
// Audio clips and WAV I/O
// ---------------------------------------------------------------------------

struct AudioClip {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 0;
};

namespace detail {

inline std::uint32_t rd_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t rd_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

/// Reads a PCM WAV file (8/16/32-bit integer or 32-bit float samples).
/// Multi-channel audio is downmixed to mono by channel mean.
inline AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "wav: cannot open ", path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  check(bytes.size() >= 12, "wav: ", path.string(), " too small");
  check(std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
            std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
        "wav: ", path.string(), " is not a RIFF/WAVE file");

  int format = 0, channels = 0, bits = 0, sample_rate = 0;
  const unsigned char* data_ptr = nullptr;
  std::size_t data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + off);
    const std::uint32_t sz = detail::rd_u32le(bytes.data() + off + 4);
    const std::size_t body = off + 8;
    check(body + sz <= bytes.size(), "wav: truncated chunk in ",
          path.string());
    if (std::memcmp(id, "fmt ", 4) == 0) {
      check(sz >= 16, "wav: fmt chunk too small");
      format = detail::rd_u16le(bytes.data() + body);
      channels = detail::rd_u16le(bytes.data() + body + 2);
      sample_rate = static_cast<int>(detail::rd_u32le(bytes.data() + body + 4));
      bits = detail::rd_u16le(bytes.data() + body + 14);
      if (format == 0xFFFE && sz >= 40) {
        // WAVE_FORMAT_EXTENSIBLE: the actual format tag leads the sub-format
        format = detail::rd_u16le(bytes.data() + body + 24);
      }
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_len = sz;
    }
    off = body + sz + (sz & 1);  // chunks are word-aligned
  }

  check(sample_rate > 0 && channels > 0, "wav: missing fmt chunk in ",
        path.string());
  check(data_ptr != nullptr, "wav: missing data chunk in ", path.string());
  check(format == 1 || format == 3, "wav: unsupported format tag ", format,
        " in ", path.string());
  if (format == 3) {
    check(bits == 32, "wav: float samples must be 32-bit");
  } else {
    check(bits == 8 || bits == 16 || bits == 32,
          "wav: unsupported PCM bit depth ", bits);
  }

  const std::size_t bytes_per_sample = static_cast<std::size_t>(bits) / 8;
  const std::size_t stride = bytes_per_sample * static_cast<std::size_t>(channels);
  const std::size_t frames = data_len / stride;
  check(frames > 0, "wav: ", path.string(), " has no samples");

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data_ptr + i * stride + c * bytes_per_sample;
      double v = 0.0;
      if (format == 3) {
        float fv;
        std::uint32_t u = detail::rd_u32le(p);
        std::memcpy(&fv, &u, 4);
        v = fv;
      } else if (bits == 8) {
        v = (static_cast<int>(*p) - 128) / 128.0;
      } else if (bits == 16) {
        const std::int16_t s = static_cast<std::int16_t>(detail::rd_u16le(p));
        v = s / 32768.0;
      } else {
        const std::int32_t s = static_cast<std::int32_t>(detail::rd_u32le(p));
        v = s / 2147483648.0;
      }
      acc += v;
    }
    clip.samples[i] = static_cast<float>(acc / channels);
  }
  return clip;
}

/// Writes mono 16-bit PCM. Samples are clamped to [-1, 1].
inline void write_wav_pcm16(const std::filesystem::path& path,
                            const std::vector<float>& samples,
                            int sample_rate) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check(os.good(), "wav: cannot open ", path.string(), " for writing");
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(samples.size() * 2);
  auto u32 = [&os](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<char*>(b), 4);
  };
  auto u16 = [&os](std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    os.write(reinterpret_cast<char*>(b), 2);
  };
  os.write("RIFF", 4);
  u32(36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(static_cast<std::uint32_t>(sample_rate));
  u32(static_cast<std::uint32_t>(sample_rate * 2));
  u16(2);
  u16(16);
  os.write("data", 4);
  u32(data_bytes);
  for (const float s : samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const auto v = static_cast<std::int16_t>(std::lrint(c * 32767.0f));
    u16(static_cast<std::uint16_t>(v));
  }
  check(os.good(), "wav: write to ", path.string(), " failed");
}

/// Cuts [start_s, stop_s) out of a clip, clamped to the clip bounds.
inline AudioClip slice_clip(const AudioClip& clip, double start_s,
                            double stop_s) {
  check(stop_s > start_s, "slice_clip: empty range");
  const auto n = static_cast<std::int64_t>(clip.samples.size());
  std::int64_t a = static_cast<std::int64_t>(std::llround(start_s * clip.sample_rate));
  std::int64_t b = static_cast<std::int64_t>(std::llround(stop_s * clip.sample_rate));
  a = std::clamp<std::int64_t>(a, 0, n);
  b = std::clamp<std::int64_t>(b, 0, n);
  check(b > a, "slice_clip: range [", start_s, ", ", stop_s,
        ") is outside the clip");
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(clip.samples.begin() + a, clip.samples.begin() + b);
  return out;
}

// ---------------------------------------------------------------------------
// Spectrogram extraction
// ---------------------------------------------------------------------------

struct DspConfig {
  double window_ms = 10.0;
  double hop_ms = 5.0;
  int n_mels = 128;
  int fft_size = 0;  // 0: next power of two >= window length
  int target_frames = 400;
  double log_eps = 1e-10;
};

inline int window_samples(const DspConfig& cfg, int sample_rate) {
  return static_cast<int>(std::lround(cfg.window_ms * sample_rate / 1000.0));
}

inline int hop_samples(const DspConfig& cfg, int sample_rate) {
  return static_cast<int>(std::lround(cfg.hop_ms * sample_rate / 1000.0));
}

inline int effective_fft_size(const DspConfig& cfg, int sample_rate) {
  const int win = window_samples(cfg, sample_rate);
  if (cfg.fft_size > 0) {
    check(cfg.fft_size >= win, "dsp: fft_size ", cfg.fft_size,
          " smaller than window of ", win, " samples");
    check((cfg.fft_size & (cfg.fft_size - 1)) == 0,
          "dsp: fft_size must be a power of two");
    return cfg.fft_size;
  }
  int n = 1;
  while (n < win) n <<= 1;
  return n;
}

/// Log-mel spectrogram, time-major [frame][mel]. Values are stored as f32;
/// extraction itself runs in double precision, so identical input always
/// produces bit-identical output.
struct Spectrogram {
  std::int64_t n_frames = 0;
  std::int64_t n_mels = 0;
  float hop_ms = 0.0f;
  float window_ms = 0.0f;
  std::vector<float> values;

  float& at(std::int64_t t, std::int64_t m) {
    return values[static_cast<std::size_t>(t * n_mels + m)];
  }
  float at(std::int64_t t, std::int64_t m) const {
    return values[static_cast<std::size_t>(t * n_mels + m)];
  }
};

namespace detail {

inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace detail

/// Hann-windowed power spectrum, one row per frame. Frames start at integer
/// multiples of the hop (no centering); frame count is
/// floor((len - win) / hop) + 1.
inline Tensor<double> stft_power(const AudioClip& clip, const DspConfig& cfg) {
  check(clip.sample_rate > 0, "stft: sample rate must be positive");
  check(!clip.samples.empty(), "stft: empty clip");
  const int win = window_samples(cfg, clip.sample_rate);
  const int hop = hop_samples(cfg, clip.sample_rate);
  check(win > 0 && hop > 0, "stft: window and hop must be positive");
  const auto len = static_cast<std::int64_t>(clip.samples.size());
  check(len >= win, "stft: clip of ", len, " samples is shorter than one ",
        win, "-sample window");

  const int fft_n = effective_fft_size(cfg, clip.sample_rate);
  const std::int64_t n_frames = (len - win) / hop + 1;
  const std::int64_t n_bins = fft_n / 2 + 1;

  std::vector<double> window(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / win);
  }

  Tensor<double> power({n_frames, n_bins});
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(fft_n));
  for (std::int64_t t = 0; t < n_frames; ++t) {
    const float* src = clip.samples.data() + t * hop;
    for (int i = 0; i < win; ++i) {
      buf[i] = std::complex<double>(static_cast<double>(src[i]) * window[i], 0.0);
    }
    std::fill(buf.begin() + win, buf.end(), std::complex<double>(0.0, 0.0));
    detail::fft_inplace(buf);
    double* row = power.data.data() + t * n_bins;
    for (std::int64_t k = 0; k < n_bins; ++k) {
      row[k] = std::norm(buf[static_cast<std::size_t>(k)]);
    }
  }
  return power;
}

inline double hz_to_mel(double f) {
  return 2595.0 * std::log10(1.0 + f / 700.0);
}

inline double mel_to_hz(double m) {
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

/// Peak frequencies (Hz) of the triangular filters, strictly increasing.
inline std::vector<double> mel_filter_centers(int sample_rate, int n_mels) {
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(static_cast<std::size_t>(n_mels));
  for (int m = 0; m < n_mels; ++m) {
    centers[m] = mel_to_hz(mel_max * (m + 1) / (n_mels + 1));
  }
  return centers;
}

/// Triangular mel filterbank on the HTK scale, spanning 0 to sample_rate/2.
/// Each area-normalized triangle is integrated over the band each FFT bin
/// covers, so every filter keeps a contiguous, non-empty support even when
/// its width falls below the bin spacing. Rows sum to ~1 away from the edges.
inline Tensor<double> mel_filterbank(int sample_rate, int fft_size,
                                     int n_mels) {
  check(n_mels >= 1, "mel_filterbank: n_mels must be >= 1");
  check(sample_rate > 0 && fft_size > 0 && (fft_size & (fft_size - 1)) == 0,
        "mel_filterbank: fft_size must be a positive power of two");
  const std::int64_t n_bins = fft_size / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);

  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (int m = 0; m < n_mels + 2; ++m) {
    edges[m] = mel_to_hz(mel_max * m / (n_mels + 1));
  }

  const double bin_width = static_cast<double>(sample_rate) / fft_size;
  Tensor<double> fb({n_mels, n_bins});

  // integral of the rising/falling edge of a unit triangle over [a, b]
  const auto seg_integral = [](double a, double b, double lo, double hi,
                               bool rising) -> double {
    const double x0 = std::max(a, lo);
    const double x1 = std::min(b, hi);
    if (x1 <= x0 || hi <= lo) return 0.0;
    if (rising) {
      // g(f) = (f - lo) / (hi - lo)
      return ((x1 - lo) * (x1 - lo) - (x0 - lo) * (x0 - lo)) / (2.0 * (hi - lo));
    }
    // g(f) = (hi - f) / (hi - lo)
    return ((hi - x0) * (hi - x0) - (hi - x1) * (hi - x1)) / (2.0 * (hi - lo));
  };

  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m];
    const double ctr = edges[m + 1];
    const double hi = edges[m + 2];
    check(hi > lo && ctr > lo && hi > ctr,
          "mel_filterbank: ", n_mels,
          " mel bands collapse at this resolution (filter ", m, ")");
    const double norm = 2.0 / (hi - lo);  // unit area per filter
    double row_sum = 0.0;
    for (std::int64_t k = 0; k < n_bins; ++k) {
      const double a = std::max(0.0, k * bin_width - bin_width / 2.0);
      const double b = std::min(nyquist, k * bin_width + bin_width / 2.0);
      const double w = norm * (seg_integral(a, b, lo, ctr, true) +
                               seg_integral(a, b, ctr, hi, false));
      fb.data[m * n_bins + k] = w;
      row_sum += w;
    }
    check(row_sum > 0.0, "mel_filterbank: filter ", m,
          " is empty; n_mels too large for this fft resolution");
  }
  return fb;
}

namespace detail {

template <typename PowerT>
Spectrogram apply_filterbank_log(const PowerT& power, const Tensor<double>& fb,
                                 const DspConfig& cfg) {
  const std::int64_t n_frames = power.dim(0);
  const std::int64_t n_bins = power.dim(1);
  const std::int64_t n_mels = fb.dim(0);
  Spectrogram spec;
  spec.n_frames = n_frames;
  spec.n_mels = n_mels;
  spec.hop_ms = static_cast<float>(cfg.hop_ms);
  spec.window_ms = static_cast<float>(cfg.window_ms);
  spec.values.resize(static_cast<std::size_t>(n_frames * n_mels));
  for (std::int64_t t = 0; t < n_frames; ++t) {
    const double* prow = power.data.data() + t * n_bins;
    for (std::int64_t m = 0; m < n_mels; ++m) {
      const double* frow = fb.data.data() + m * n_bins;
      double acc = 0.0;
      for (std::int64_t k = 0; k < n_bins; ++k) acc += frow[k] * prow[k];
      spec.values[static_cast<std::size_t>(t * n_mels + m)] =
          static_cast<float>(std::log(acc + cfg.log_eps));
    }
  }
  return spec;
}

}  // namespace detail

/// Extends a spectrogram to `frames` by duplicating the last frame.
inline Spectrogram pad_frames(const Spectrogram& spec, std::int64_t frames) {
  if (spec.n_frames >= frames) return spec;
  Spectrogram out = spec;
  out.n_frames = frames;
  out.values.resize(static_cast<std::size_t>(frames * spec.n_mels));
  const float* last = spec.values.data() + (spec.n_frames - 1) * spec.n_mels;
  for (std::int64_t t = spec.n_frames; t < frames; ++t) {
    std::copy_n(last, spec.n_mels,
                out.values.data() + t * spec.n_mels);
  }
  return out;
}

inline Spectrogram center_truncate(const Spectrogram& spec,
                                   std::int64_t frames) {
  if (spec.n_frames <= frames) return spec;
  Spectrogram out;
  out.n_frames = frames;
  out.n_mels = spec.n_mels;
  out.hop_ms = spec.hop_ms;
  out.window_ms = spec.window_ms;
  const std::int64_t start = (spec.n_frames - frames) / 2;
  out.values.assign(
      spec.values.begin() + start * spec.n_mels,
      spec.values.begin() + (start + frames) * spec.n_mels);
  return out;
}

/// Frame range [start, start + len) with last-frame duplication past the end.
inline Spectrogram slice_frames(const Spectrogram& spec, std::int64_t start,
                                std::int64_t len) {
  check(start >= 0 && start < spec.n_frames, "slice_frames: start ", start,
        " outside [0, ", spec.n_frames, ")");
  Spectrogram out;
  out.n_frames = len;
  out.n_mels = spec.n_mels;
  out.hop_ms = spec.hop_ms;
  out.window_ms = spec.window_ms;
  out.values.resize(static_cast<std::size_t>(len * spec.n_mels));
  for (std::int64_t t = 0; t < len; ++t) {
    const std::int64_t src = std::min(start + t, spec.n_frames - 1);
    std::copy_n(spec.values.data() + src * spec.n_mels, spec.n_mels,
                out.values.data() + t * spec.n_mels);
  }
  return out;
}

/// Raw log-mel frames with no length adjustment.
inline Spectrogram log_mel_raw(const AudioClip& clip, const DspConfig& cfg) {
  const Tensor<double> power = stft_power(clip, cfg);
  const Tensor<double> fb = mel_filterbank(
      clip.sample_rate, effective_fft_size(cfg, clip.sample_rate), cfg.n_mels);
  return detail::apply_filterbank_log(power, fb, cfg);
}

/// Network-input spectrogram: exactly target_frames frames, padded by
/// last-frame duplication or center-truncated.
inline Spectrogram log_mel(const AudioClip& clip, const DspConfig& cfg) {
  Spectrogram spec = log_mel_raw(clip, cfg);
  if (spec.n_frames < cfg.target_frames) {
    return pad_frames(spec, cfg.target_frames);
  }
  return center_truncate(spec, cfg.target_frames);
}

/// Cache variant: keeps every raw frame of long clips so segments can be cut
/// later, but still pads short clips up to target_frames.
inline Spectrogram log_mel_clip(const AudioClip& clip, const DspConfig& cfg) {
  Spectrogram spec = log_mel_raw(clip, cfg);
  if (spec.n_frames < cfg.target_frames) {
    return pad_frames(spec, cfg.target_frames);
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Spectrogram cache files
//
//   magic "ASFS1" (5 bytes), u8 version, u16 n_mels, u32 n_frames,
//   f32 hop_ms, f32 window_ms, then f32 values row-major (time-major).
//   All fields little-endian. Total size: 20 + n_frames * n_mels * 4 bytes.
// ---------------------------------------------------------------------------

inline constexpr char kCacheMagic[5] = {'A', 'S', 'F', 'S', '1'};
inline constexpr std::uint8_t kCacheVersion = 1;
inline constexpr std::size_t kCacheHeaderBytes = 20;

inline void cache_write(const Spectrogram& spec,
                        const std::filesystem::path& path) {
  check(spec.n_mels > 0 && spec.n_frames > 0, "cache_write: empty spectrogram");
  check(spec.n_mels <= 0xFFFF, "cache_write: n_mels exceeds u16");
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    check(os.good(), "cache_write: cannot open ", tmp);
    os.write(kCacheMagic, 5);
    os.put(static_cast<char>(kCacheVersion));
    const auto mels = static_cast<std::uint16_t>(spec.n_mels);
    unsigned char m2[2] = {static_cast<unsigned char>(mels & 0xff),
                           static_cast<unsigned char>(mels >> 8)};
    os.write(reinterpret_cast<char*>(m2), 2);
    const auto frames = static_cast<std::uint32_t>(spec.n_frames);
    unsigned char f4[4] = {static_cast<unsigned char>(frames & 0xff),
                           static_cast<unsigned char>((frames >> 8) & 0xff),
                           static_cast<unsigned char>((frames >> 16) & 0xff),
                           static_cast<unsigned char>((frames >> 24) & 0xff)};
    os.write(reinterpret_cast<char*>(f4), 4);
    auto put_f32 = [&os](float v) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                            static_cast<unsigned char>((bits >> 8) & 0xff),
                            static_cast<unsigned char>((bits >> 16) & 0xff),
                            static_cast<unsigned char>((bits >> 24) & 0xff)};
      os.write(reinterpret_cast<char*>(b), 4);
    };
    put_f32(spec.hop_ms);
    put_f32(spec.window_ms);
    for (const float v : spec.values) put_f32(v);
    check(os.good(), "cache_write: write to ", tmp, " failed");
  }
  std::filesystem::rename(tmp, path);
}

inline Spectrogram cache_read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cache_read: cannot open ", path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  check(bytes.size() >= kCacheHeaderBytes, "cache_read: ", path.string(),
        " truncated header");
  check(std::memcmp(bytes.data(), kCacheMagic, 5) == 0,
        "cache_read: bad magic in ", path.string());
  check(bytes[5] == kCacheVersion, "cache_read: unsupported version ",
        static_cast<int>(bytes[5]));
  Spectrogram spec;
  spec.n_mels = detail::rd_u16le(bytes.data() + 6);
  spec.n_frames = detail::rd_u32le(bytes.data() + 8);
  std::uint32_t hb = detail::rd_u32le(bytes.data() + 12);
  std::uint32_t wb = detail::rd_u32le(bytes.data() + 16);
  std::memcpy(&spec.hop_ms, &hb, 4);
  std::memcpy(&spec.window_ms, &wb, 4);
  check(spec.n_mels > 0 && spec.n_frames > 0, "cache_read: ", path.string(),
        " has empty extents");
  const std::size_t expect =
      kCacheHeaderBytes +
      static_cast<std::size_t>(spec.n_frames * spec.n_mels) * 4;
  check(bytes.size() == expect, "cache_read: ", path.string(), " is ",
        bytes.size(), " bytes, expected ", expect);
  spec.values.resize(static_cast<std::size_t>(spec.n_frames * spec.n_mels));
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    const std::uint32_t bits =
        detail::rd_u32le(bytes.data() + kCacheHeaderBytes + i * 4);
    std::memcpy(&spec.values[i], &bits, 4);
  }
  return spec;
}

/// Converts a spectrogram batch into the network's N x 1 x T x F layout.
template <typename R>
Tensor<R> specs_to_batch(const std::vector<const Spectrogram*>& specs) {
  check(!specs.empty(), "specs_to_batch: empty batch");
  const std::int64_t t = specs[0]->n_frames, f = specs[0]->n_mels;
  Tensor<R> batch({static_cast<std::int64_t>(specs.size()), 1, t, f});
  for (std::size_t i = 0; i < specs.size(); ++i) {
    check(specs[i]->n_frames == t && specs[i]->n_mels == f,
          "specs_to_batch: inconsistent extents");
    for (std::size_t j = 0; j < specs[i]->values.size(); ++j) {
      batch.data[i * static_cast<std::size_t>(t * f) + j] =
          static_cast<R>(specs[i]->values[j]);
    }
  }
  return batch;
}

}  // namespace asf
