// spoofbench/mel.hpp
//
// Copyright 2026  The spoofbench authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SPOOFBENCH_MEL_HPP_
#define SPOOFBENCH_MEL_HPP_

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "spoofbench/checkpoint.hpp"  // little-endian helpers
#include "spoofbench/wav.hpp"

// Mel-spectrogram feature extraction: Hann STFT magnitudes projected onto
// triangular mel filters, dynamic-range compressed with log(1 + C*M), then
// chopped into 64x64 band-by-frame patches.

namespace spoofbench {

struct MelConfig {
  int n_fft = 1024;
  int hop = 160;
  int n_mels = 64;
  double compression = 1000.0;  // C in log(1 + C*M)
  int sample_rate = kSampleRate;
  int patch_frames = 64;

  void validate() const {
    require(n_fft > 0 && (n_fft & (n_fft - 1)) == 0,
            "mel: n_fft must be a power of two");
    require(hop > 0 && hop <= n_fft, "mel: hop must be in (0, n_fft]");
    require(n_mels >= 1, "mel: n_mels must be positive");
  }
};

// Dense row-major real matrix for the DSP stages (kept independent of the
// autodiff tensors; the pipeline runs in double for stable golden values).
struct MatrixD {
  int rows = 0, cols = 0;
  std::vector<double> v;

  MatrixD() = default;
  MatrixD(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

// One 64x64 dynamic-range-compressed mel-spectrogram patch (band-major).
struct MelPatch {
  int n_mels = 64;
  int n_frames = 64;
  uint32_t label = 0;  // speaker index; meaning is assigned by the caller
  std::vector<float> values;  // n_mels * n_frames, all >= 0
};

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

namespace detail {

// Iterative radix-2 complex FFT (input size must be a power of two).
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> t = a[i + k + len / 2] * w;
        a[i + k] = u + t;
        a[i + k + len / 2] = u - t;
        w *= wl;
      }
    }
  }
}

}  // namespace detail

// Number of STFT frames for a given sample count: 1 + floor((len-n_fft)/hop).
inline int stft_frame_count(size_t len, const MelConfig& cfg) {
  if (len < static_cast<size_t>(cfg.n_fft)) return 0;
  return 1 + static_cast<int>((len - static_cast<size_t>(cfg.n_fft)) /
                              static_cast<size_t>(cfg.hop));
}

// Hann-windowed magnitude spectrogram, bins 0..n_fft/2 (rows) by frames
// (columns).  Magnitude, not power.
inline MatrixD stft_magnitude(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  const int T = stft_frame_count(w.samples.size(), cfg);
  require(T >= 1, "stft: audio shorter than one analysis window (" +
                      std::to_string(w.samples.size()) + " < " +
                      std::to_string(cfg.n_fft) + " samples)");
  const int n_bins = cfg.n_fft / 2 + 1;

  // periodic Hann
  std::vector<double> window(static_cast<size_t>(cfg.n_fft));
  for (int i = 0; i < cfg.n_fft; ++i)
    window[static_cast<size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * M_PI * i / cfg.n_fft));

  MatrixD out(n_bins, T);
  std::vector<std::complex<double>> buf(static_cast<size_t>(cfg.n_fft));
  for (int t = 0; t < T; ++t) {
    const size_t start = static_cast<size_t>(t) * cfg.hop;
    for (int i = 0; i < cfg.n_fft; ++i)
      buf[static_cast<size_t>(i)] = {
          w.samples[start + static_cast<size_t>(i)] * window[static_cast<size_t>(i)], 0.0};
    detail::fft_inplace(buf);
    for (int k = 0; k < n_bins; ++k)
      out.at(k, t) = std::abs(buf[static_cast<size_t>(k)]);
  }
  return out;
}

// 64 triangular filters with centers uniformly spaced on the mel axis
// between 0 Hz and Nyquist.  Unnormalized (peak 1); each row has a single
// contiguous support.
inline MatrixD mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const int n_bins = cfg.n_fft / 2 + 1;
  const double f_max = cfg.sample_rate / 2.0;
  const double m_max = hz_to_mel(f_max);

  std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[static_cast<size_t>(i)] =
        mel_to_hz(m_max * static_cast<double>(i) / (cfg.n_mels + 1));

  MatrixD fb(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[static_cast<size_t>(m)];
    const double mid = edges[static_cast<size_t>(m) + 1];
    const double hi = edges[static_cast<size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f =
          static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double wgt = 0.0;
      if (f > lo && f < hi)
        wgt = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb.at(m, k) = wgt;
    }
  }
  return fb;
}

// Element-wise log(1 + C*M); rejects negative input.
inline MatrixD drc(const MatrixD& m, double compression) {
  MatrixD out = m;
  for (auto& x : out.v) {
    require(x >= 0.0, "drc: negative input value");
    x = std::log1p(compression * x);
  }
  return out;
}

// Full pipeline: STFT -> mel projection -> DRC -> non-overlapping windows of
// `patch_frames` frames (trailing partial window discarded).  Returns an
// empty list when fewer than one patch of frames is available.
inline std::vector<MelPatch> extract_patches(const Waveform& w,
                                             const MelConfig& cfg,
                                             int stride_frames = 0) {
  cfg.validate();
  if (stride_frames <= 0) stride_frames = cfg.patch_frames;
  std::vector<MelPatch> patches;
  const int T = stft_frame_count(w.samples.size(), cfg);
  if (T < cfg.patch_frames) return patches;

  const MatrixD spec = stft_magnitude(w, cfg);
  const MatrixD fb = mel_filterbank(cfg);

  MatrixD mel(cfg.n_mels, T);
  for (int m = 0; m < cfg.n_mels; ++m)
    for (int t = 0; t < T; ++t) {
      double acc = 0.0;
      for (int k = 0; k < spec.rows; ++k) acc += fb.at(m, k) * spec.at(k, t);
      mel.at(m, t) = acc;
    }
  const MatrixD comp = drc(mel, cfg.compression);

  for (int start = 0; start + cfg.patch_frames <= T; start += stride_frames) {
    MelPatch p;
    p.n_mels = cfg.n_mels;
    p.n_frames = cfg.patch_frames;
    p.values.resize(static_cast<size_t>(cfg.n_mels) * cfg.patch_frames);
    for (int m = 0; m < cfg.n_mels; ++m)
      for (int t = 0; t < cfg.patch_frames; ++t)
        p.values[static_cast<size_t>(m) * cfg.patch_frames + t] =
            static_cast<float>(comp.at(m, start + t));
    patches.push_back(std::move(p));
  }
  return patches;
}

// ---------------------------------------------------------------------------
// MELS feature container:
//   magic "MELS", version u32, patch count u32, n_mels u32, n_frames u32,
//   then per patch { speaker-label u32, little-endian f32 data }.
// ---------------------------------------------------------------------------

constexpr uint32_t kMelsVersion = 1;

inline void write_mels(const std::string& path,
                       const std::vector<MelPatch>& patches, int n_mels = 64,
                       int n_frames = 64) {
  std::ofstream os(path, std::ios::binary);
  require(os.is_open(), "mels: cannot open " + path + " for writing");
  os.write("MELS", 4);
  detail::write_u32(os, kMelsVersion);
  detail::write_u32(os, static_cast<uint32_t>(patches.size()));
  detail::write_u32(os, static_cast<uint32_t>(n_mels));
  detail::write_u32(os, static_cast<uint32_t>(n_frames));
  for (const auto& p : patches) {
    require(p.n_mels == n_mels && p.n_frames == n_frames &&
                p.values.size() == static_cast<size_t>(n_mels) * n_frames,
            "mels: patch shape mismatch while writing " + path);
    detail::write_u32(os, p.label);
    detail::write_f32_array(os, p.values.data(), p.values.size());
  }
  require(static_cast<bool>(os), "mels: write failed for " + path);
}

inline std::vector<MelPatch> read_mels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.is_open(), "mels: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  require(static_cast<bool>(is) && std::memcmp(magic, "MELS", 4) == 0,
          "mels: " + path + " is not a MELS file");
  const uint32_t version = detail::read_u32(is);
  require(version == kMelsVersion,
          "mels: unsupported version " + std::to_string(version));
  const uint32_t count = detail::read_u32(is);
  const uint32_t n_mels = detail::read_u32(is);
  const uint32_t n_frames = detail::read_u32(is);
  std::vector<MelPatch> out(count);
  for (uint32_t i = 0; i < count; ++i) {
    auto& p = out[i];
    p.n_mels = static_cast<int>(n_mels);
    p.n_frames = static_cast<int>(n_frames);
    p.label = detail::read_u32(is);
    p.values.resize(static_cast<size_t>(n_mels) * n_frames);
    detail::read_f32_array(is, p.values.data(), p.values.size());
  }
  return out;
}

// P5 (binary) PGM export, min-max scaled to 8 bits, for eyeballing patches.
// Row 0 is the highest mel band so low frequencies sit at the bottom.
inline void write_pgm(const std::string& path, const MelPatch& p) {
  std::ofstream os(path, std::ios::binary);
  require(os.is_open(), "pgm: cannot open " + path + " for writing");
  float lo = p.values[0], hi = p.values[0];
  for (float v : p.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float span = hi > lo ? hi - lo : 1.0f;
  os << "P5\n" << p.n_frames << " " << p.n_mels << "\n255\n";
  for (int m = p.n_mels - 1; m >= 0; --m)
    for (int t = 0; t < p.n_frames; ++t) {
      const float v =
          (p.values[static_cast<size_t>(m) * p.n_frames + t] - lo) / span;
      os.put(static_cast<char>(static_cast<unsigned char>(
          std::lrint(v * 255.0f))));
    }
  require(static_cast<bool>(os), "pgm: write failed for " + path);
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_MEL_HPP_
