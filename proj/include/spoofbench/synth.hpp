// spoofbench/synth.hpp
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

#ifndef SPOOFBENCH_SYNTH_HPP_
#define SPOOFBENCH_SYNTH_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spoofbench/rng.hpp"
#include "spoofbench/wav.hpp"

// Deterministic synthetic multi-speaker audio.  Speakers are distinguished
// by fundamental frequency and formant placement, which is acoustically
// meaningful and easily learnable at desk scale.  The "other" class is white
// noise through random band-pass resonators in bursts.

namespace spoofbench {

struct SyntheticSpeakerProfile {
  double f0 = 150.0;                  // Hz, in [80, 300]
  std::vector<double> formant_freqs;  // 2-3 entries, below Nyquist
  std::vector<double> formant_bws;    // Hz
  double jitter = 0.01;               // fractional f0 wander, in [0, 0.1]
  double env_rate = 4.0;              // amplitude modulation rate, Hz; 0 = off
};

struct CorpusSpec {
  int speakers = 10;
  int utterances_per_speaker = 20;
  double utterance_s = 2.0;
  int noise_utterances = 20;
  uint64_t seed = 0;

  void validate() const {
    require(speakers >= 1 && utterances_per_speaker >= 1 &&
                noise_utterances >= 1,
            "corpus: all counts must be at least 1");
    require(utterance_s >= 0.7,
            "corpus: utterances must be at least 0.7 s for one patch");
  }
};

struct SynthCorpus {
  std::vector<std::string> speaker_ids;            // "spk00", ...
  std::vector<SyntheticSpeakerProfile> profiles;   // aligned with speaker_ids
  std::vector<std::vector<Waveform>> utterances;   // per speaker
  std::vector<Waveform> noise;                     // the "other" class
};

// n profiles with pairwise f0 gaps of at least 10 Hz (separability).
inline std::vector<SyntheticSpeakerProfile> make_profiles(int n,
                                                          uint64_t seed) {
  require(n >= 1, "make_profiles: need at least one profile");
  const double f_lo = 85.0, f_hi = 295.0;
  require(n == 1 || (f_hi - f_lo) / (n - 1) >= 10.0,
          "make_profiles: " + std::to_string(n) +
              " speakers cannot keep 10 Hz f0 spacing in [85, 295]");
  RngStream rng(seed, "corpus/profiles");
  std::vector<SyntheticSpeakerProfile> profiles(static_cast<size_t>(n));
  const double spacing = n > 1 ? (f_hi - f_lo) / (n - 1) : 0.0;
  // small enough to keep both the 10 Hz gaps and the [80, 300] range
  const double wiggle = n > 1 ? std::min((spacing - 10.0) / 2.0, 5.0) : 70.0;
  for (int i = 0; i < n; ++i) {
    auto& p = profiles[static_cast<size_t>(i)];
    const double center = n > 1 ? f_lo + i * spacing : 190.0;
    p.f0 = center + rng.uniform(-wiggle, wiggle);
    const int n_formants = 2 + static_cast<int>(rng.index(2));
    const double lo[3] = {350.0, 1050.0, 2500.0};
    const double hi[3] = {850.0, 2300.0, 3600.0};
    const double blo[3] = {70.0, 120.0, 180.0};
    const double bhi[3] = {130.0, 250.0, 350.0};
    for (int f = 0; f < n_formants; ++f) {
      p.formant_freqs.push_back(rng.uniform(lo[f], hi[f]));
      p.formant_bws.push_back(rng.uniform(blo[f], bhi[f]));
    }
    p.jitter = rng.uniform(0.005, 0.03);
    p.env_rate = rng.uniform(2.0, 6.0);
  }
  return profiles;
}

namespace detail {

// Two-pole resonator y[n] = x[n] + 2 r cos(theta) y[n-1] - r^2 y[n-2].
inline void resonate(std::vector<double>& x, double freq, double bw, int fs) {
  const double r = std::exp(-M_PI * bw / fs);
  const double theta = 2.0 * M_PI * freq / fs;
  const double a1 = 2.0 * r * std::cos(theta);
  const double a2 = -r * r;
  double y1 = 0.0, y2 = 0.0;
  for (auto& v : x) {
    const double y = v + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

inline void normalize_peak(std::vector<double>& x, double peak) {
  double mx = 0.0;
  for (double v : x) mx = std::max(mx, std::abs(v));
  if (mx <= 0.0) return;
  const double g = peak / mx;
  for (auto& v : x) v *= g;
}

}  // namespace detail

// Sawtooth glottal source at a jittered f0, pre-emphasized, shaped by a
// cascade of formant resonators, then amplitude modulated and normalized to
// peak 0.9 at 16 kHz.
inline Waveform synth_utterance(const SyntheticSpeakerProfile& p,
                                double duration_s, RngStream& rng) {
  require(duration_s >= 0.7,
          "synth_utterance: duration must be at least 0.7 s");
  require(p.f0 >= 80.0 && p.f0 <= 300.0,
          "synth_utterance: f0 out of [80, 300]");
  for (double f : p.formant_freqs)
    require(f < kSampleRate / 2.0, "synth_utterance: formant above Nyquist");
  require(p.jitter >= 0.0 && p.jitter <= 0.1,
          "synth_utterance: jitter out of [0, 0.1]");

  const int fs = kSampleRate;
  const size_t n = static_cast<size_t>(std::lround(duration_s * fs));
  std::vector<double> x(n);

  // slow f0 wander: AR(1) with ~unit stationary deviation
  const double rho = 0.9995;
  const double sj = std::sqrt(1.0 - rho * rho);
  double j = 0.0, phase = rng.uniform();
  double prev = 0.0;
  for (size_t i = 0; i < n; ++i) {
    j = rho * j + sj * rng.normal();
    const double f_inst = p.f0 * (1.0 + p.jitter * j);
    phase += f_inst / fs;
    phase -= std::floor(phase);
    const double saw = 2.0 * phase - 1.0;
    x[i] = saw - 0.9 * prev;  // pre-emphasis tilts energy toward the formants
    prev = saw;
  }

  for (size_t f = 0; f < p.formant_freqs.size(); ++f)
    detail::resonate(x, p.formant_freqs[f], p.formant_bws[f], fs);

  if (p.env_rate > 0.0) {
    for (size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      const double env =
          1.0 - 0.2 * (1.0 - std::cos(2.0 * M_PI * p.env_rate * t));
      x[i] *= env;
    }
  }

  detail::normalize_peak(x, 0.9);
  Waveform w;
  w.sample_rate = fs;
  w.samples.assign(x.begin(), x.end());
  return w;
}

// White noise through a random band-pass resonator, gated into bursts.
inline Waveform synth_noise_burst(double duration_s, RngStream& rng) {
  const int fs = kSampleRate;
  const size_t n = static_cast<size_t>(std::lround(duration_s * fs));
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  detail::resonate(x, rng.uniform(400.0, 6000.0), rng.uniform(300.0, 1200.0),
                   fs);
  const double burst_rate = rng.uniform(2.5, 5.0);
  const double phi = rng.uniform(0.0, 2.0 * M_PI);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double g = std::sin(2.0 * M_PI * burst_rate * t + phi);
    x[i] *= g > 0.0 ? g : 0.0;
  }
  detail::normalize_peak(x, 0.9);
  Waveform w;
  w.sample_rate = fs;
  w.samples.assign(x.begin(), x.end());
  return w;
}

// Deterministic labeled dataset: `speakers` voices plus the "other" noise
// class.  A pure function of the spec.
inline SynthCorpus build_corpus(const CorpusSpec& spec) {
  spec.validate();
  SynthCorpus corpus;
  corpus.profiles = make_profiles(spec.speakers, spec.seed);
  for (int s = 0; s < spec.speakers; ++s) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "spk%02d", s);
    corpus.speaker_ids.emplace_back(buf);
    std::vector<Waveform> utts;
    for (int u = 0; u < spec.utterances_per_speaker; ++u) {
      RngStream rng(spec.seed, "corpus/utt", static_cast<uint64_t>(s),
                    static_cast<uint64_t>(u));
      utts.push_back(synth_utterance(corpus.profiles[static_cast<size_t>(s)],
                                     spec.utterance_s, rng));
    }
    corpus.utterances.push_back(std::move(utts));
  }
  for (int u = 0; u < spec.noise_utterances; ++u) {
    RngStream rng(spec.seed, "corpus/noise", static_cast<uint64_t>(u));
    corpus.noise.push_back(synth_noise_burst(spec.utterance_s, rng));
  }
  return corpus;
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_SYNTH_HPP_
