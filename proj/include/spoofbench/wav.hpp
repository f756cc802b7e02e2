// spoofbench/wav.hpp
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

#ifndef SPOOFBENCH_WAV_HPP_
#define SPOOFBENCH_WAV_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "spoofbench/tensor.hpp"  // Error / require

namespace spoofbench {

constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<float> samples;  // mono, amplitudes in [-1, 1]
  int sample_rate = kSampleRate;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  bool empty() const { return samples.empty(); }
};

namespace detail {

inline uint32_t rd_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t rd_u16le(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// Linear-interpolation resampler.  Adequate at desk scale; no anti-alias
// filtering.
inline Waveform resample_linear(const Waveform& in, int target_rate) {
  if (in.sample_rate == target_rate || in.samples.empty()) {
    Waveform out = in;
    out.sample_rate = target_rate;
    return out;
  }
  const double ratio =
      static_cast<double>(in.sample_rate) / static_cast<double>(target_rate);
  const size_t n_out = static_cast<size_t>(
      std::floor(static_cast<double>(in.samples.size() - 1) / ratio)) + 1;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (size_t n = 0; n < n_out; ++n) {
    const double pos = n * ratio;
    const size_t i = static_cast<size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    const float a = in.samples[i];
    const float b = i + 1 < in.samples.size() ? in.samples[i + 1] : a;
    out.samples[n] = static_cast<float>(a + frac * (b - a));
  }
  return out;
}

// Reads a RIFF/WAVE file (PCM16 or IEEE float32, any channel count),
// downmixes to mono by channel mean and resamples to 16 kHz.
inline Waveform load_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.is_open(), "wav: cannot open " + path);

  unsigned char hdr[12];
  is.read(reinterpret_cast<char*>(hdr), 12);
  require(static_cast<bool>(is) && std::memcmp(hdr, "RIFF", 4) == 0 &&
              std::memcmp(hdr + 8, "WAVE", 4) == 0,
          "wav: " + path + " is not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<unsigned char> data;

  while (true) {
    unsigned char chunk[8];
    is.read(reinterpret_cast<char*>(chunk), 8);
    if (!is) break;
    const uint32_t size = detail::rd_u32le(chunk + 4);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      std::vector<unsigned char> fmt(size);
      is.read(reinterpret_cast<char*>(fmt.data()), size);
      require(static_cast<bool>(is) && size >= 16,
              "wav: malformed fmt chunk in " + path);
      format = detail::rd_u16le(fmt.data());
      channels = detail::rd_u16le(fmt.data() + 2);
      rate = detail::rd_u32le(fmt.data() + 4);
      bits = detail::rd_u16le(fmt.data() + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data.resize(size);
      is.read(reinterpret_cast<char*>(data.data()), size);
      require(static_cast<bool>(is), "wav: truncated data chunk in " + path);
      break;
    } else {
      is.seekg(size + (size & 1), std::ios_base::cur);
    }
  }

  require(have_fmt, "wav: missing fmt chunk in " + path);
  require(channels >= 1, "wav: zero channels in " + path);
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  require(pcm16 || f32,
          "wav: unsupported codec in " + path + " (format tag " +
              std::to_string(format) + ", " + std::to_string(bits) +
              " bits); only PCM16 and IEEE float32 are handled");

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t n_frames = data.size() / frame_bytes;
  require(n_frames > 0, "wav: " + path + " contains no audio");

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(n_frames);
  for (size_t f = 0; f < n_frames; ++f) {
    double acc = 0.0;
    for (size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data.data() + f * frame_bytes +
                               c * bytes_per_sample;
      if (pcm16) {
        int16_t s = static_cast<int16_t>(detail::rd_u16le(p));
        acc += s / 32768.0;
      } else {
        float s;
        std::memcpy(&s, p, 4);
        acc += s;
      }
    }
    float v = static_cast<float>(acc / channels);
    w.samples[f] = std::min(1.0f, std::max(-1.0f, v));
  }
  return resample_linear(w, kSampleRate);
}

// Writes mono PCM16.
inline void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  require(os.is_open(), "wav: cannot open " + path + " for writing");
  const uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
  auto u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<char*>(b), 4);
  };
  auto u16 = [&](uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<char*>(b), 2);
  };
  os.write("RIFF", 4);
  u32(36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(static_cast<uint32_t>(w.sample_rate));
  u32(static_cast<uint32_t>(w.sample_rate) * 2);
  u16(2);
  u16(16);
  os.write("data", 4);
  u32(data_bytes);
  for (float s : w.samples) {
    const float c = std::min(1.0f, std::max(-1.0f, s));
    const int16_t q = static_cast<int16_t>(std::lrint(c * 32767.0f));
    u16(static_cast<uint16_t>(q));
  }
  require(static_cast<bool>(os), "wav: write failed for " + path);
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_WAV_HPP_
