// spoofbench/adam.hpp
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

#ifndef SPOOFBENCH_ADAM_HPP_
#define SPOOFBENCH_ADAM_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "spoofbench/tensor.hpp"

namespace spoofbench {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter first/second moment accumulators.  One adam_step call over
// the whole parameter list counts as one update step.
template <typename T>
struct AdamState {
  AdamConfig cfg;
  int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  void init(const std::vector<Tensor<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(static_cast<size_t>(p.size()), T(0));
      v.emplace_back(static_cast<size_t>(p.size()), T(0));
    }
    step = 0;
  }
};

// Standard Adam with bias correction, applied in place.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params,
               const std::vector<Tensor<T>>& grads, AdamState<T>& st) {
  require(params.size() == grads.size() && params.size() == st.m.size(),
          "adam_step: params/grads/state are not aligned");
  st.step += 1;
  const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (size_t i = 0; i < params.size(); ++i) {
    require(params[i].shape() == grads[i].shape(),
            "adam_step: gradient shape " + shape_str(grads[i].shape()) +
                " does not match parameter " + shape_str(params[i].shape()));
    auto& pv = params[i].mutable_vals();
    const auto& gv = grads[i].vals();
    auto& mi = st.m[i];
    auto& vi = st.v[i];
    const int64_t n = static_cast<int64_t>(pv.size());
    SPOOFBENCH_OMP_FOR(n > (1 << 16))
    for (int64_t j = 0; j < n; ++j) {
      const size_t k = static_cast<size_t>(j);
      const double g = static_cast<double>(gv[k]);
      mi[k] = static_cast<T>(b1 * mi[k] + (1.0 - b1) * g);
      vi[k] = static_cast<T>(b2 * vi[k] + (1.0 - b2) * g * g);
      const double mhat = mi[k] / bc1;
      const double vhat = vi[k] / bc2;
      pv[k] = static_cast<T>(pv[k] -
                             st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps));
    }
  }
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_ADAM_HPP_
