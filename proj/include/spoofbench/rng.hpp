// spoofbench/rng.hpp
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

#ifndef SPOOFBENCH_RNG_HPP_
#define SPOOFBENCH_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace spoofbench {

// Deterministic random streams.  Every source of randomness in the toolkit
// is a named substream of one master seed, e.g.
//
//   RngStream rng(seed, "gan/z", iter);
//
// so that consuming draws from one stream never shifts another.  The
// generator is xoshiro256** with splitmix64 seeding; all distributions are
// implemented here rather than with <random> so that results are identical
// across standard libraries.
class RngStream {
 public:
  RngStream(uint64_t master_seed, std::string_view name,
            uint64_t a = 0, uint64_t b = 0) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the stream name
    for (char c : name) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ULL;
    }
    uint64_t x = master_seed;
    x = splitmix(x ^ h);
    x = splitmix(x ^ (a + 0x9e3779b97f4a7c15ULL));
    x = splitmix(x ^ (b + 0x7f4a7c15f39cc060ULL));
    for (auto& s : state_) {
      x = splitmix(x);
      s = x;
    }
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t index(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; the sine partner is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  // Normal(0, std) redrawn until within two standard deviations.
  double truncated_normal(double std) {
    double x = 0.0;
    do {
      x = normal() * std;
    } while (std::abs(x) > 2.0 * std);
    return x;
  }

  template <typename T>
  void fill_normal(std::vector<T>& out, double mean, double std) {
    for (auto& v : out) v = static_cast<T>(normal(mean, std));
  }

  template <typename T>
  void fill_uniform(std::vector<T>& out, double lo, double hi) {
    for (auto& v : out) v = static_cast<T>(uniform(lo, hi));
  }

  template <typename T>
  void fill_truncated_normal(std::vector<T>& out, double std) {
    for (auto& v : out) v = static_cast<T>(truncated_normal(std));
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4] = {};
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace spoofbench

#endif  // SPOOFBENCH_RNG_HPP_
