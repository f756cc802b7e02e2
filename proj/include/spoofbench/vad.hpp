// spoofbench/vad.hpp
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

#ifndef SPOOFBENCH_VAD_HPP_
#define SPOOFBENCH_VAD_HPP_

#include <cmath>
#include <vector>

#include "spoofbench/wav.hpp"

namespace spoofbench {

// Energy-based silence removal: the waveform is cut into fixed frames and
// frames whose RMS falls more than `threshold_db` below the loudest frame
// are dropped; surviving frames are concatenated in order.  A trailing
// partial frame is discarded.  Returns an empty waveform when every frame is
// below threshold (the caller treats that as the all-silent flag).
inline Waveform vad_trim(const Waveform& w, int frame_ms = 30,
                         double threshold_db = -40.0) {
  const size_t frame =
      static_cast<size_t>(w.sample_rate) * static_cast<size_t>(frame_ms) / 1000;
  require(frame > 0, "vad_trim: frame too short");
  const size_t n_frames = w.samples.size() / frame;

  std::vector<double> rms(n_frames, 0.0);
  double peak = 0.0;
  for (size_t f = 0; f < n_frames; ++f) {
    double acc = 0.0;
    for (size_t i = 0; i < frame; ++i) {
      const double s = w.samples[f * frame + i];
      acc += s * s;
    }
    rms[f] = std::sqrt(acc / static_cast<double>(frame));
    peak = std::max(peak, rms[f]);
  }

  Waveform out;
  out.sample_rate = w.sample_rate;
  if (peak <= 0.0) return out;  // pure silence

  const double cutoff = peak * std::pow(10.0, threshold_db / 20.0);
  for (size_t f = 0; f < n_frames; ++f) {
    if (rms[f] > cutoff) {
      out.samples.insert(out.samples.end(),
                         w.samples.begin() + static_cast<long>(f * frame),
                         w.samples.begin() + static_cast<long>((f + 1) * frame));
    }
  }
  return out;
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_VAD_HPP_
