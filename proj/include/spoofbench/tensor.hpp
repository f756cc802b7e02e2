// spoofbench/tensor.hpp
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

#ifndef SPOOFBENCH_TENSOR_HPP_
#define SPOOFBENCH_TENSOR_HPP_

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif
#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "spoofbench/rng.hpp"

// Reverse-mode automatic differentiation over dense row-major tensors.
//
// Every operation records a node in an implicit append-only graph (node ids
// are monotone, so inputs always precede consumers).  The key property of
// this engine is that each node's backward rule (VJP) is itself expressed in
// terms of the same differentiable operations: when grad() is called with
// create_graph=true the backward pass is recorded as ordinary graph nodes,
// so a gradient can be differentiated again.  That is what makes the
// gradient-penalty term of the critic loss exactly differentiable instead of
// approximated.
//
// Two scalar types are supported: float is the narrow mode used for
// training, double is the wide mode used by the finite-difference checks.

namespace spoofbench {

using Shape = std::vector<int>;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// Caps Eigen's GEMM workers; SPOOFBENCH_THREADS overrides the hardware
// default.  Returns the configured count.
inline int configure_threads() {
  static int n = [] {
    int t = static_cast<int>(std::thread::hardware_concurrency());
    if (t <= 0) t = 1;
    if (const char* env = std::getenv("SPOOFBENCH_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) t = v;
    }
    Eigen::setNbThreads(t);
#ifdef _OPENMP
    omp_set_num_threads(t);
#endif
#ifdef __GLIBC__
    // Keep multi-megabyte activation buffers on the malloc free list instead
    // of round-tripping through mmap on every op.
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
    return t;
  }();
  return n;
}

// Work is split over disjoint output regions only, so results are
// bit-identical for any thread count.
#ifdef _OPENMP
#define SPOOFBENCH_PRAGMA(x) _Pragma(#x)
#define SPOOFBENCH_OMP_FOR(cond) \
  SPOOFBENCH_PRAGMA(omp parallel for schedule(static) if (cond))
#else
#define SPOOFBENCH_OMP_FOR(cond)
#endif

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kScale,
  kAddScalar,
  kPow,
  kMatmul,
  kTranspose,
  kRelu,
  kLeakyRelu,
  kLeakyReluGrad,
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kSqrt,
  kSoftmaxRows,
  kLogSoftmaxRows,
  kRowSum,
  kColSum,
  kRepRows,
  kRepCols,
  kSumAll,
  kBroadcastScalar,
  kChannelMean,
  kBroadcastChannels,
  kBatchNormTrain,
  kPickRows,
  kScatterRows,
  kReshape,
  kConcatRows,
  kSliceRows,
  kPadRows,
  kConv2d,
  kConv2dBias,
  kConvInputGrad,
  kConvWeightGrad,
  kMaxPool2x2,
  kMaxUnpool2x2,
  kMaxGather2x2,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kNeg: return "neg";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kPow: return "pow";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kRelu: return "relu";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kLeakyReluGrad: return "leaky_relu_grad";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kLogSoftmaxRows: return "log_softmax_rows";
    case OpKind::kRowSum: return "row_sum";
    case OpKind::kColSum: return "col_sum";
    case OpKind::kRepRows: return "rep_rows";
    case OpKind::kRepCols: return "rep_cols";
    case OpKind::kSumAll: return "sum_all";
    case OpKind::kBroadcastScalar: return "broadcast_scalar";
    case OpKind::kChannelMean: return "channel_mean";
    case OpKind::kBroadcastChannels: return "broadcast_channels";
    case OpKind::kBatchNormTrain: return "batch_norm";
    case OpKind::kPickRows: return "pick_rows";
    case OpKind::kScatterRows: return "scatter_rows";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kSliceRows: return "slice_rows";
    case OpKind::kPadRows: return "pad_rows";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kConv2dBias: return "conv2d_bias";
    case OpKind::kConvInputGrad: return "conv2d_input_grad";
    case OpKind::kConvWeightGrad: return "conv2d_weight_grad";
    case OpKind::kMaxPool2x2: return "maxpool2x2";
    case OpKind::kMaxUnpool2x2: return "maxunpool2x2";
    case OpKind::kMaxGather2x2: return "maxgather2x2";
  }
  return "?";
}

template <typename T>
class Tensor;

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  OpKind op = OpKind::kLeaf;
  int64_t id = 0;
  bool requires_grad = false;
  std::vector<Tensor<T>> inputs;
  // Produces one gradient tensor per input (undefined for inputs that do not
  // participate in differentiation).  Built from graph ops, never from raw
  // buffer arithmetic, so that it is itself differentiable.  The mask says
  // which input gradients the caller actually needs; ops with expensive
  // multi-input rules honor it, the rest may ignore it.
  std::function<std::vector<Tensor<T>>(const Tensor<T>&,
                                       const std::vector<char>&)>
      vjp;
};

namespace detail {
inline int64_t next_node_id() {
  static std::atomic<int64_t> counter{0};
  return ++counter;
}
inline bool& recording_flag() {
  thread_local bool rec = true;
  return rec;
}
}  // namespace detail

// Suppresses graph recording in a scope: operations still compute values but
// leave no backward trail (used for evaluation passes and plain backward).
class NoRecordGuard {
 public:
  NoRecordGuard() : prev_(detail::recording_flag()) {
    detail::recording_flag() = false;
  }
  ~NoRecordGuard() { detail::recording_flag() = prev_; }
  NoRecordGuard(const NoRecordGuard&) = delete;
  NoRecordGuard& operator=(const NoRecordGuard&) = delete;

 private:
  bool prev_;
};

class RecordGuard {
 public:
  explicit RecordGuard(bool on) : prev_(detail::recording_flag()) {
    detail::recording_flag() = on;
  }
  ~RecordGuard() { detail::recording_flag() = prev_; }
  RecordGuard(const RecordGuard&) = delete;
  RecordGuard& operator=(const RecordGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape) {
    return from_data(shape,
                     std::vector<T>(static_cast<size_t>(shape_numel(shape)),
                                    T(0)));
  }
  static Tensor full(const Shape& shape, T v) {
    return from_data(
        shape, std::vector<T>(static_cast<size_t>(shape_numel(shape)), v));
  }
  static Tensor scalar(T v) { return from_data({}, std::vector<T>{v}); }
  static Tensor from_data(const Shape& shape, std::vector<T> data) {
    require(static_cast<int64_t>(data.size()) == shape_numel(shape),
            "tensor: data length " + std::to_string(data.size()) +
                " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = shape;
    n->value = std::move(data);
    n->id = detail::next_node_id();
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }
  const std::vector<T>& vals() const { return node_->value; }
  std::vector<T>& mutable_vals() { return node_->value; }
  T item() const {
    require(size() == 1, "item(): tensor has " + std::to_string(size()) +
                             " elements, expected 1");
    return node_->value[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool b = true) {
    require(node_->op == OpKind::kLeaf,
            "set_requires_grad: only leaf tensors can be marked");
    node_->requires_grad = b;
    return *this;
  }
  OpKind op() const { return node_->op; }
  int64_t node_id() const { return node_->id; }

  // Value copy severed from the graph.
  Tensor detach() const { return from_data(node_->shape, node_->value); }

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

  static Tensor make_op(
      OpKind op, Shape shape, std::vector<T> value, std::vector<Tensor> inputs,
      std::function<std::vector<Tensor>(const Tensor&,
                                        const std::vector<char>&)>
          vjp) {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    n->id = detail::next_node_id();
    bool track = false;
    if (detail::recording_flag()) {
      for (const auto& in : inputs)
        if (in.requires_grad()) track = true;
    }
    if (track) {
      n->requires_grad = true;
      n->inputs = std::move(inputs);
      n->vjp = std::move(vjp);
    }
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

// Reusable scratch for the GEMM-backed kernels.  Graph construction is
// single-threaded per training context, so thread_local buffers are safe.
template <typename T>
std::vector<T>& scratch(int which) {
  thread_local std::vector<T> bufs[4];
  return bufs[which];
}

template <typename T>
using EMat =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

template <typename T>
void check_same_shape(OpKind op, const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(),
          std::string(op_name(op)) + ": shape mismatch " +
              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void check_rank2(OpKind op, const Tensor<T>& x) {
  require(x.rank() == 2, std::string(op_name(op)) + ": expected rank-2, got " +
                             shape_str(x.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Element-wise operations
// ---------------------------------------------------------------------------

namespace detail {
constexpr int64_t kParallelCutoff = 1 << 17;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(OpKind::kAdd, a, b);
  configure_threads();
  std::vector<T> out(a.vals());
  const auto& bv = b.vals();
  const int64_t n = static_cast<int64_t>(out.size());
  SPOOFBENCH_OMP_FOR(n > detail::kParallelCutoff)
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] += bv[static_cast<size_t>(i)];
  return Tensor<T>::make_op(
      OpKind::kAdd, a.shape(), std::move(out), {a, b},
      [](const Tensor<T>& g, const std::vector<char>&) { return std::vector<Tensor<T>>{g, g}; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(OpKind::kSub, a, b);
  std::vector<T> out(a.vals());
  const auto& bv = b.vals();
  const int64_t n = static_cast<int64_t>(out.size());
  SPOOFBENCH_OMP_FOR(n > detail::kParallelCutoff)
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] -= bv[static_cast<size_t>(i)];
  return Tensor<T>::make_op(OpKind::kSub, a.shape(), std::move(out), {a, b},
                            [](const Tensor<T>& g, const std::vector<char>&) {
                              return std::vector<Tensor<T>>{g, neg(g)};
                            });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(OpKind::kMul, a, b);
  configure_threads();
  std::vector<T> out(a.vals());
  const auto& bv = b.vals();
  const int64_t n = static_cast<int64_t>(out.size());
  SPOOFBENCH_OMP_FOR(n > detail::kParallelCutoff)
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] *= bv[static_cast<size_t>(i)];
  return Tensor<T>::make_op(OpKind::kMul, a.shape(), std::move(out), {a, b},
                            [a, b](const Tensor<T>& g, const std::vector<char>&) {
                              return std::vector<Tensor<T>>{mul(g, b),
                                                            mul(g, a)};
                            });
}

template <typename T>
Tensor<T> divide(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(OpKind::kDiv, a, b);
  std::vector<T> out(a.vals());
  const auto& bv = b.vals();
  for (size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  return Tensor<T>::make_op(
      OpKind::kDiv, a.shape(), std::move(out), {a, b},
      [a, b](const Tensor<T>& g, const std::vector<char>&) {
        Tensor<T> ga = divide(g, b);
        // d/db (a/b) = -a / b^2
        Tensor<T> gb = neg(divide(mul(g, divide(a, b)), b));
        return std::vector<Tensor<T>>{ga, gb};
      });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  std::vector<T> out(x.vals());
  for (auto& v : out) v = -v;
  return Tensor<T>::make_op(OpKind::kNeg, x.shape(), std::move(out), {x},
                            [](const Tensor<T>& g, const std::vector<char>&) {
                              return std::vector<Tensor<T>>{neg(g)};
                            });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double c) {
  std::vector<T> out(x.vals());
  for (auto& v : out) v = static_cast<T>(v * c);
  return Tensor<T>::make_op(OpKind::kScale, x.shape(), std::move(out), {x},
                            [c](const Tensor<T>& g, const std::vector<char>&) {
                              return std::vector<Tensor<T>>{scale(g, c)};
                            });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, double c) {
  std::vector<T> out(x.vals());
  for (auto& v : out) v = static_cast<T>(v + c);
  return Tensor<T>::make_op(
      OpKind::kAddScalar, x.shape(), std::move(out), {x},
      [](const Tensor<T>& g, const std::vector<char>&) { return std::vector<Tensor<T>>{g}; });
}

template <typename T>
Tensor<T> pow_(const Tensor<T>& x, double c) {
  std::vector<T> out(x.vals());
  for (auto& v : out) v = static_cast<T>(std::pow(static_cast<double>(v), c));
  return Tensor<T>::make_op(
      OpKind::kPow, x.shape(), std::move(out), {x},
      [x, c](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{mul(g, scale(pow_(x, c - 1.0), c))};
      });
}

// g * (x > 0 ? 1 : slope) in a single pass.  Linear in g; the slope mask is
// piecewise constant in x, so no gradient flows to x (a.e. correct).
template <typename T>
Tensor<T> leaky_relu_grad(const Tensor<T>& g, const Tensor<T>& x,
                          double slope) {
  detail::check_same_shape(OpKind::kLeakyReluGrad, g, x);
  std::vector<T> out(static_cast<size_t>(g.size()));
  const auto& gv = g.vals();
  const auto& xv = x.vals();
  const int64_t n = static_cast<int64_t>(out.size());
  SPOOFBENCH_OMP_FOR(n > detail::kParallelCutoff)
  for (int64_t i = 0; i < n; ++i)
    out[static_cast<size_t>(i)] =
        xv[static_cast<size_t>(i)] > T(0)
            ? gv[static_cast<size_t>(i)]
            : static_cast<T>(gv[static_cast<size_t>(i)] * slope);
  return Tensor<T>::make_op(
      OpKind::kLeakyReluGrad, g.shape(), std::move(out), {g, x},
      [g, x, slope](const Tensor<T>& u, const std::vector<char>& nd) {
        std::vector<Tensor<T>> gs(2);
        if (nd[0]) gs[0] = leaky_relu_grad(u, x, slope);
        return gs;
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.vals());
  const int64_t n = static_cast<int64_t>(out.size());
  SPOOFBENCH_OMP_FOR(n > detail::kParallelCutoff)
  for (int64_t i = 0; i < n; ++i) {
    T& v = out[static_cast<size_t>(i)];
    v = v > T(0) ? v : T(0);
  }
  return Tensor<T>::make_op(
      OpKind::kRelu, x.shape(), std::move(out), {x},
      [x](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{leaky_relu_grad(g, x, 0.0)};
      });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope = 0.2) {
  std::vector<T> out(x.vals());
  const int64_t n = static_cast<int64_t>(out.size());
  SPOOFBENCH_OMP_FOR(n > detail::kParallelCutoff)
  for (int64_t i = 0; i < n; ++i) {
    T& v = out[static_cast<size_t>(i)];
    v = v > T(0) ? v : static_cast<T>(v * slope);
  }
  return Tensor<T>::make_op(
      OpKind::kLeakyRelu, x.shape(), std::move(out), {x},
      [x, slope](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{leaky_relu_grad(g, x, slope)};
      });
}

template <typename T>
Tensor<T> tanh_(const Tensor<T>& x) {
  std::vector<T> out(x.vals());
  for (auto& v : out) v = std::tanh(v);
  return Tensor<T>::make_op(
      OpKind::kTanh, x.shape(), std::move(out), {x},
      [x](const Tensor<T>& g, const std::vector<char>&) {
        Tensor<T> y = tanh_(x);
        return std::vector<Tensor<T>>{
            mul(g, add_scalar(neg(mul(y, y)), 1.0))};
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.vals());
  for (auto& v : out) v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
  return Tensor<T>::make_op(
      OpKind::kSigmoid, x.shape(), std::move(out), {x},
      [x](const Tensor<T>& g, const std::vector<char>&) {
        Tensor<T> y = sigmoid(x);
        return std::vector<Tensor<T>>{
            mul(g, mul(y, add_scalar(neg(y), 1.0)))};
      });
}

template <typename T>
Tensor<T> exp_(const Tensor<T>& x) {
  std::vector<T> out(x.vals());
  for (auto& v : out) v = std::exp(v);
  return Tensor<T>::make_op(
      OpKind::kExp, x.shape(), std::move(out), {x},
      [x](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{mul(g, exp_(x))};
      });
}

template <typename T>
Tensor<T> log_(const Tensor<T>& x) {
  std::vector<T> out(x.vals());
  for (auto& v : out) v = std::log(v);
  return Tensor<T>::make_op(
      OpKind::kLog, x.shape(), std::move(out), {x},
      [x](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{divide(g, x)};
      });
}

template <typename T>
Tensor<T> sqrt_(const Tensor<T>& x) {
  std::vector<T> out(x.vals());
  for (auto& v : out) v = std::sqrt(v);
  return Tensor<T>::make_op(
      OpKind::kSqrt, x.shape(), std::move(out), {x},
      [x](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{divide(scale(g, 0.5), sqrt_(x))};
      });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return mul(x, x);
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::check_rank2(OpKind::kTranspose, x);
  const int m = x.dim(0), n = x.dim(1);
  std::vector<T> out(static_cast<size_t>(m) * n);
  const auto& xv = x.vals();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(j) * m + i] = xv[static_cast<size_t>(i) * n + j];
  return Tensor<T>::make_op(OpKind::kTranspose, {n, m}, std::move(out), {x},
                            [](const Tensor<T>& g, const std::vector<char>&) {
                              return std::vector<Tensor<T>>{transpose(g)};
                            });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_rank2(OpKind::kMatmul, a);
  detail::check_rank2(OpKind::kMatmul, b);
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  require(k == k2, "matmul: inner dimensions differ, " +
                       shape_str(a.shape()) + " x " + shape_str(b.shape()));
  configure_threads();
  std::vector<T> out(static_cast<size_t>(m) * n);
  detail::ECMap<T> ma(a.vals().data(), m, k);
  detail::ECMap<T> mb(b.vals().data(), k, n);
  detail::EMap<T> mo(out.data(), m, n);
  mo.noalias() = ma * mb;
  return Tensor<T>::make_op(
      OpKind::kMatmul, {m, n}, std::move(out), {a, b},
      [a, b](const Tensor<T>& g, const std::vector<char>& nd) {
        std::vector<Tensor<T>> gs(2);
        if (nd[0]) gs[0] = matmul(g, transpose(b));
        if (nd[1]) gs[1] = matmul(transpose(a), g);
        return gs;
      });
}

// ---------------------------------------------------------------------------
// Reductions / broadcasts
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> row_sum(const Tensor<T>& x) {  // [B,F] -> [B]
  detail::check_rank2(OpKind::kRowSum, x);
  const int b = x.dim(0), f = x.dim(1);
  std::vector<T> out(static_cast<size_t>(b), T(0));
  const auto& xv = x.vals();
  for (int i = 0; i < b; ++i) {
    T s = T(0);
    for (int j = 0; j < f; ++j) s += xv[static_cast<size_t>(i) * f + j];
    out[static_cast<size_t>(i)] = s;
  }
  return Tensor<T>::make_op(OpKind::kRowSum, {b}, std::move(out), {x},
                            [f](const Tensor<T>& g, const std::vector<char>&) {
                              return std::vector<Tensor<T>>{rep_cols(g, f)};
                            });
}

template <typename T>
Tensor<T> col_sum(const Tensor<T>& x) {  // [B,F] -> [F]
  detail::check_rank2(OpKind::kColSum, x);
  const int b = x.dim(0), f = x.dim(1);
  std::vector<T> out(static_cast<size_t>(f), T(0));
  const auto& xv = x.vals();
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < f; ++j)
      out[static_cast<size_t>(j)] += xv[static_cast<size_t>(i) * f + j];
  return Tensor<T>::make_op(OpKind::kColSum, {f}, std::move(out), {x},
                            [b](const Tensor<T>& g, const std::vector<char>&) {
                              return std::vector<Tensor<T>>{rep_rows(g, b)};
                            });
}

template <typename T>
Tensor<T> rep_rows(const Tensor<T>& v, int b) {  // [F] -> [B,F]
  require(v.rank() == 1, "rep_rows: expected rank-1, got " +
                             shape_str(v.shape()));
  const int f = v.dim(0);
  std::vector<T> out(static_cast<size_t>(b) * f);
  for (int i = 0; i < b; ++i)
    std::memcpy(out.data() + static_cast<size_t>(i) * f, v.vals().data(),
                sizeof(T) * static_cast<size_t>(f));
  return Tensor<T>::make_op(OpKind::kRepRows, {b, f}, std::move(out), {v},
                            [](const Tensor<T>& g, const std::vector<char>&) {
                              return std::vector<Tensor<T>>{col_sum(g)};
                            });
}

template <typename T>
Tensor<T> rep_cols(const Tensor<T>& v, int f) {  // [B] -> [B,F]
  require(v.rank() == 1, "rep_cols: expected rank-1, got " +
                             shape_str(v.shape()));
  const int b = v.dim(0);
  std::vector<T> out(static_cast<size_t>(b) * f);
  const auto& vv = v.vals();
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < f; ++j)
      out[static_cast<size_t>(i) * f + j] = vv[static_cast<size_t>(i)];
  return Tensor<T>::make_op(OpKind::kRepCols, {b, f}, std::move(out), {v},
                            [](const Tensor<T>& g, const std::vector<char>&) {
                              return std::vector<Tensor<T>>{row_sum(g)};
                            });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {  // any -> []
  T s = T(0);
  for (T v : x.vals()) s += v;
  Shape xs = x.shape();
  return Tensor<T>::make_op(
      OpKind::kSumAll, {}, {s}, {x}, [xs](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{broadcast_scalar(g, xs)};
      });
}

template <typename T>
Tensor<T> broadcast_scalar(const Tensor<T>& s, const Shape& shape) {
  require(s.size() == 1, "broadcast_scalar: source must be a scalar");
  std::vector<T> out(static_cast<size_t>(shape_numel(shape)), s.vals()[0]);
  return Tensor<T>::make_op(OpKind::kBroadcastScalar, shape, std::move(out),
                            {s}, [](const Tensor<T>& g, const std::vector<char>&) {
                              return std::vector<Tensor<T>>{sum_all(g)};
                            });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

template <typename T>
Tensor<T> channel_mean(const Tensor<T>& x) {  // [B,C,H,W] -> [C]
  require(x.rank() == 4, "channel_mean: expected rank-4, got " +
                             shape_str(x.shape()));
  const int b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const int h = x.dim(2), w = x.dim(3);
  std::vector<T> out(static_cast<size_t>(c), T(0));
  const auto& xv = x.vals();
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < c; ++j) {
      T s = T(0);
      const T* p = xv.data() + (static_cast<size_t>(i) * c + j) * hw;
      for (int k = 0; k < hw; ++k) s += p[k];
      out[static_cast<size_t>(j)] += s;
    }
  const double inv = 1.0 / (static_cast<double>(b) * hw);
  for (auto& v : out) v = static_cast<T>(v * inv);
  return Tensor<T>::make_op(
      OpKind::kChannelMean, {c}, std::move(out), {x},
      [b, h, w, inv](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{
            scale(broadcast_channels(g, b, h, w), inv)};
      });
}

template <typename T>
Tensor<T> broadcast_channels(const Tensor<T>& v, int b, int h, int w) {
  require(v.rank() == 1, "broadcast_channels: expected rank-1, got " +
                             shape_str(v.shape()));
  const int c = v.dim(0);
  const int hw = h * w;
  std::vector<T> out(static_cast<size_t>(b) * c * hw);
  const auto& vv = v.vals();
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < c; ++j) {
      T* p = out.data() + (static_cast<size_t>(i) * c + j) * hw;
      for (int k = 0; k < hw; ++k) p[k] = vv[static_cast<size_t>(j)];
    }
  const double count = static_cast<double>(b) * hw;
  return Tensor<T>::make_op(
      OpKind::kBroadcastChannels, {b, c, h, w}, std::move(out), {v},
      [count](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{scale(channel_mean(g), count)};
      });
}

// ---------------------------------------------------------------------------
// Softmax family
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {  // [B,F] row-wise
  detail::check_rank2(OpKind::kSoftmaxRows, x);
  const int b = x.dim(0), f = x.dim(1);
  std::vector<T> out(x.vals());
  for (int i = 0; i < b; ++i) {
    T* row = out.data() + static_cast<size_t>(i) * f;
    T mx = row[0];
    for (int j = 1; j < f; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (int j = 0; j < f; ++j) {
      row[j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)));
      s += row[j];
    }
    for (int j = 0; j < f; ++j) row[j] = static_cast<T>(row[j] / s);
  }
  return Tensor<T>::make_op(
      OpKind::kSoftmaxRows, x.shape(), std::move(out), {x},
      [x, f](const Tensor<T>& g, const std::vector<char>&) {
        Tensor<T> y = softmax_rows(x);
        Tensor<T> dot = row_sum(mul(g, y));
        return std::vector<Tensor<T>>{mul(y, sub(g, rep_cols(dot, f)))};
      });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x) {
  detail::check_rank2(OpKind::kLogSoftmaxRows, x);
  const int b = x.dim(0), f = x.dim(1);
  std::vector<T> out(x.vals());
  for (int i = 0; i < b; ++i) {
    T* row = out.data() + static_cast<size_t>(i) * f;
    T mx = row[0];
    for (int j = 1; j < f; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (int j = 0; j < f; ++j)
      s += std::exp(static_cast<double>(row[j] - mx));
    const T lse = static_cast<T>(std::log(s)) + mx;
    for (int j = 0; j < f; ++j) row[j] -= lse;
  }
  return Tensor<T>::make_op(
      OpKind::kLogSoftmaxRows, x.shape(), std::move(out), {x},
      [x, f](const Tensor<T>& g, const std::vector<char>&) {
        Tensor<T> y = softmax_rows(x);
        Tensor<T> gsum = row_sum(g);
        return std::vector<Tensor<T>>{sub(g, mul(y, rep_cols(gsum, f)))};
      });
}

// ---------------------------------------------------------------------------
// Index / shape operations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> pick_rows(const Tensor<T>& x, std::vector<int> idx) {
  detail::check_rank2(OpKind::kPickRows, x);
  const int b = x.dim(0), f = x.dim(1);
  require(static_cast<int>(idx.size()) == b,
          "pick_rows: need one index per row");
  std::vector<T> out(static_cast<size_t>(b));
  const auto& xv = x.vals();
  for (int i = 0; i < b; ++i) {
    require(idx[static_cast<size_t>(i)] >= 0 &&
                idx[static_cast<size_t>(i)] < f,
            "pick_rows: index out of range");
    out[static_cast<size_t>(i)] =
        xv[static_cast<size_t>(i) * f + idx[static_cast<size_t>(i)]];
  }
  return Tensor<T>::make_op(
      OpKind::kPickRows, {b}, std::move(out), {x},
      [idx, f](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{scatter_rows(g, idx, f)};
      });
}

template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& v, std::vector<int> idx, int f) {
  require(v.rank() == 1, "scatter_rows: expected rank-1 source");
  const int b = v.dim(0);
  require(static_cast<int>(idx.size()) == b,
          "scatter_rows: need one index per row");
  std::vector<T> out(static_cast<size_t>(b) * f, T(0));
  const auto& vv = v.vals();
  for (int i = 0; i < b; ++i)
    out[static_cast<size_t>(i) * f + idx[static_cast<size_t>(i)]] =
        vv[static_cast<size_t>(i)];
  return Tensor<T>::make_op(
      OpKind::kScatterRows, {b, f}, std::move(out), {v},
      [idx](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{pick_rows(g, idx)};
      });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  int64_t known = 1;
  int infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      require(infer < 0, "reshape: at most one -1 dimension");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    require(known > 0 && x.size() % known == 0,
            "reshape: cannot infer dimension for " + shape_str(shape));
    shape[static_cast<size_t>(infer)] = static_cast<int>(x.size() / known);
  }
  require(shape_numel(shape) == x.size(),
          "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
              " changes element count");
  Shape orig = x.shape();
  return Tensor<T>::make_op(
      OpKind::kReshape, shape, x.vals(), {x}, [orig](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{reshape(g, orig)};
      });
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.rank() == b.rank() && a.rank() >= 1,
          "concat_rows: rank mismatch");
  for (int i = 1; i < a.rank(); ++i)
    require(a.dim(i) == b.dim(i), "concat_rows: trailing dims differ, " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  Shape shape = a.shape();
  shape[0] = a.dim(0) + b.dim(0);
  std::vector<T> out;
  out.reserve(a.vals().size() + b.vals().size());
  out.insert(out.end(), a.vals().begin(), a.vals().end());
  out.insert(out.end(), b.vals().begin(), b.vals().end());
  const int ba = a.dim(0), btotal = shape[0];
  return Tensor<T>::make_op(
      OpKind::kConcatRows, shape, std::move(out), {a, b},
      [ba, btotal](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{slice_rows(g, 0, ba),
                                      slice_rows(g, ba, btotal)};
      });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, int from, int to) {
  require(x.rank() >= 1 && from >= 0 && to <= x.dim(0) && from < to,
          "slice_rows: bad range [" + std::to_string(from) + "," +
              std::to_string(to) + ") for " + shape_str(x.shape()));
  Shape shape = x.shape();
  shape[0] = to - from;
  const int64_t block = x.size() / x.dim(0);
  std::vector<T> out(static_cast<size_t>((to - from) * block));
  std::memcpy(out.data(), x.vals().data() + from * block,
              sizeof(T) * out.size());
  const int btotal = x.dim(0);
  return Tensor<T>::make_op(
      OpKind::kSliceRows, shape, std::move(out), {x},
      [from, btotal](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{pad_rows(g, from, btotal)};
      });
}

template <typename T>
Tensor<T> pad_rows(const Tensor<T>& x, int from, int total_rows) {
  require(x.rank() >= 1 && from >= 0 && from + x.dim(0) <= total_rows,
          "pad_rows: bad placement");
  Shape shape = x.shape();
  shape[0] = total_rows;
  const int64_t block = x.size() / x.dim(0);
  std::vector<T> out(static_cast<size_t>(total_rows * block), T(0));
  std::memcpy(out.data() + from * block, x.vals().data(),
              sizeof(T) * x.vals().size());
  const int rows = x.dim(0);
  return Tensor<T>::make_op(
      OpKind::kPadRows, shape, std::move(out), {x},
      [from, rows](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{slice_rows(g, from, from + rows)};
      });
}

// ---------------------------------------------------------------------------
// Convolutions (im2col + GEMM), NCHW layout
// ---------------------------------------------------------------------------

namespace detail {

struct ConvGeom {
  int batch, in_c, in_h, in_w;
  int out_c, kh, kw, stride, pad;
  int out_h, out_w;
};

inline ConvGeom conv_geometry(OpKind op, const Shape& x, const Shape& w,
                              int stride, int pad) {
  require(x.size() == 4 && w.size() == 4,
          std::string(op_name(op)) + ": expected rank-4 input and kernel");
  ConvGeom g;
  g.batch = x[0];
  g.in_c = x[1];
  g.in_h = x[2];
  g.in_w = x[3];
  g.out_c = w[0];
  g.kh = w[2];
  g.kw = w[3];
  g.stride = stride;
  g.pad = pad;
  require(w[1] == g.in_c,
          std::string(op_name(op)) + ": kernel expects " +
              std::to_string(w[1]) + " channels, input has " +
              std::to_string(g.in_c));
  const int eh = g.in_h + 2 * pad - g.kh;
  const int ew = g.in_w + 2 * pad - g.kw;
  require(eh >= 0 && ew >= 0 && eh % stride == 0 && ew % stride == 0,
          std::string(op_name(op)) + ": geometry " + shape_str(x) + " * " +
              shape_str(w) + " stride " + std::to_string(stride) + " pad " +
              std::to_string(pad) + " does not tile");
  g.out_h = eh / stride + 1;
  g.out_w = ew / stride + 1;
  return g;
}

// x[B,Ci,H,W] -> cols[Ci*kh*kw, B*OH*OW]
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const int64_t ncols =
      static_cast<int64_t>(g.batch) * g.out_h * g.out_w;
  const int64_t plane = static_cast<int64_t>(g.in_h) * g.in_w;
  const int krows = g.in_c * g.kh * g.kw;
  SPOOFBENCH_OMP_FOR(ncols * krows > (1 << 18))
  for (int r = 0; r < krows; ++r) {
    const int ci = r / (g.kh * g.kw);
    const int ki = (r / g.kw) % g.kh;
    const int kj = r % g.kw;
    T* dst = cols + static_cast<int64_t>(r) * ncols;
    for (int b = 0; b < g.batch; ++b) {
      const T* src = x + (static_cast<int64_t>(b) * g.in_c + ci) * plane;
      for (int oh = 0; oh < g.out_h; ++oh) {
        const int ih = oh * g.stride - g.pad + ki;
        T* drow = dst + (static_cast<int64_t>(b) * g.out_h + oh) * g.out_w;
        if (ih < 0 || ih >= g.in_h) {
          std::memset(drow, 0, sizeof(T) * static_cast<size_t>(g.out_w));
          continue;
        }
        const T* srow = src + static_cast<int64_t>(ih) * g.in_w;
        for (int ow = 0; ow < g.out_w; ++ow) {
          const int iw = ow * g.stride - g.pad + kj;
          drow[ow] = (iw >= 0 && iw < g.in_w) ? srow[iw] : T(0);
        }
      }
    }
  }
}

// cols[Ci*kh*kw, B*OH*OW] scatter-added back into dx[B,Ci,H,W]
// (parallel over channels: every channel touches a disjoint slice of dx)
template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* dx) {
  const int64_t ncols =
      static_cast<int64_t>(g.batch) * g.out_h * g.out_w;
  const int64_t plane = static_cast<int64_t>(g.in_h) * g.in_w;
  SPOOFBENCH_OMP_FOR(g.in_c > 1 && ncols * g.kh * g.kw > (1 << 16))
  for (int ci = 0; ci < g.in_c; ++ci) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const int64_t r =
            (static_cast<int64_t>(ci) * g.kh + ki) * g.kw + kj;
        const T* src = cols + r * ncols;
        for (int b = 0; b < g.batch; ++b) {
          T* dst = dx + (static_cast<int64_t>(b) * g.in_c + ci) * plane;
          for (int oh = 0; oh < g.out_h; ++oh) {
            const int ih = oh * g.stride - g.pad + ki;
            if (ih < 0 || ih >= g.in_h) continue;
            const T* srow =
                src + (static_cast<int64_t>(b) * g.out_h + oh) * g.out_w;
            T* drow = dst + static_cast<int64_t>(ih) * g.in_w;
            for (int ow = 0; ow < g.out_w; ++ow) {
              const int iw = ow * g.stride - g.pad + kj;
              if (iw >= 0 && iw < g.in_w) drow[iw] += srow[ow];
            }
          }
        }
      }
    }
  }
}

// y[B,Co,OH,OW] <-> ymat[Co, B*OH*OW]
template <typename T>
void pack_channel_major(const T* y, int batch, int out_c, int64_t ohw,
                        T* ymat) {
  const int64_t ncols = static_cast<int64_t>(batch) * ohw;
  SPOOFBENCH_OMP_FOR(ncols * out_c > (1 << 18))
  for (int co = 0; co < out_c; ++co)
    for (int b = 0; b < batch; ++b)
      std::memcpy(ymat + co * ncols + b * ohw,
                  y + (static_cast<int64_t>(b) * out_c + co) * ohw,
                  sizeof(T) * static_cast<size_t>(ohw));
}

// bias, when non-null, is folded into the unpack pass.
template <typename T>
void unpack_channel_major(const T* ymat, int batch, int out_c, int64_t ohw,
                          T* y, const T* bias = nullptr) {
  const int64_t ncols = static_cast<int64_t>(batch) * ohw;
  SPOOFBENCH_OMP_FOR(ncols * out_c > (1 << 18))
  for (int co = 0; co < out_c; ++co)
    for (int b = 0; b < batch; ++b) {
      const T* src = ymat + co * ncols + b * ohw;
      T* dst = y + (static_cast<int64_t>(b) * out_c + co) * ohw;
      if (!bias) {
        std::memcpy(dst, src, sizeof(T) * static_cast<size_t>(ohw));
      } else {
        const T bv = bias[co];
        for (int64_t i = 0; i < ohw; ++i) dst[i] = src[i] + bv;
      }
    }
}

// Uninitialized shared buffer (the im2col cache is fully overwritten).
template <typename T>
std::shared_ptr<T[]> make_uninit(int64_t n) {
  return std::shared_ptr<T[]>(new T[static_cast<size_t>(n)]);
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& gy, const Tensor<T>& w,
                            int stride, int pad, int in_h, int in_w);
template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& gy,
                             int stride, int pad, int kh, int kw,
                             const T* cached_cols = nullptr);

namespace detail {

// Shared conv core.  When `bias` is defined the per-channel bias is folded
// into the unpack epilogue.  If the result is recorded for backward, the
// im2col buffer is kept and reused by the weight-gradient rule instead of
// being recomputed.
template <typename T>
Tensor<T> conv2d_impl(OpKind kind, const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>* bias, int stride, int pad) {
  auto g = conv_geometry(kind, x.shape(), w.shape(), stride, pad);
  if (bias)
    require(bias->rank() == 1 && bias->dim(0) == g.out_c,
            std::string(op_name(kind)) + ": bias must be [" +
                std::to_string(g.out_c) + "], got " +
                shape_str(bias->shape()));
  configure_threads();
  const int64_t k = static_cast<int64_t>(g.in_c) * g.kh * g.kw;
  const int64_t ohw = static_cast<int64_t>(g.out_h) * g.out_w;
  const int64_t ncols = static_cast<int64_t>(g.batch) * ohw;

  const bool keep_cols =
      recording_flag() &&
      (x.requires_grad() || w.requires_grad() ||
       (bias && bias->requires_grad()));
  std::shared_ptr<T[]> cached;
  T* cols;
  if (keep_cols) {
    cached = make_uninit<T>(k * ncols);
    cols = cached.get();
  } else {
    auto& buf = scratch<T>(0);
    if (buf.size() < static_cast<size_t>(k * ncols))
      buf.resize(static_cast<size_t>(k * ncols));
    cols = buf.data();
  }
  im2col(x.vals().data(), g, cols);
  auto& ymat = scratch<T>(1);
  if (ymat.size() < static_cast<size_t>(g.out_c * ncols))
    ymat.resize(static_cast<size_t>(g.out_c * ncols));
  {
    ECMap<T> mw(w.vals().data(), g.out_c, k);
    ECMap<T> mc(cols, k, ncols);
    EMap<T> my(ymat.data(), g.out_c, ncols);
    my.noalias() = mw * mc;
  }
  std::vector<T> out(static_cast<size_t>(g.batch * g.out_c * ohw));
  unpack_channel_major(ymat.data(), g.batch, g.out_c, ohw, out.data(),
                       bias ? bias->vals().data() : nullptr);
  const int ih = g.in_h, iw = g.in_w, kh = g.kh, kw = g.kw;
  const double count = static_cast<double>(g.batch) * ohw;
  std::vector<Tensor<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return Tensor<T>::make_op(
      kind, {g.batch, g.out_c, g.out_h, g.out_w}, std::move(out),
      std::move(inputs),
      [x, w, stride, pad, ih, iw, kh, kw, cached, count,
       has_bias = bias != nullptr](const Tensor<T>& gr,
                                   const std::vector<char>& nd) {
        std::vector<Tensor<T>> gs(has_bias ? 3 : 2);
        if (nd[0]) gs[0] = conv2d_input_grad(gr, w, stride, pad, ih, iw);
        if (nd[1])
          gs[1] = conv2d_weight_grad(x, gr, stride, pad, kh, kw, cached.get());
        if (has_bias && nd[2]) gs[2] = scale(channel_mean(gr), count);
        return gs;
      });
}

}  // namespace detail

// y[b,co] = sum_ci x[b,ci] * w[co,ci]; w layout [Co,Ci,kh,kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride,
                 int pad) {
  return detail::conv2d_impl(OpKind::kConv2d, x, w,
                             static_cast<const Tensor<T>*>(nullptr), stride,
                             pad);
}

// conv2d with the per-channel bias folded into the epilogue.
template <typename T>
Tensor<T> conv2d_bias(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>& b, int stride, int pad) {
  return detail::conv2d_impl(OpKind::kConv2dBias, x, w, &b, stride, pad);
}

// Adjoint of conv2d with respect to its input; also the forward map of a
// transposed convolution.  gy[B,Co,OH,OW], w[Co,Ci,kh,kw] -> [B,Ci,H,W].
template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& gy, const Tensor<T>& w,
                            int stride, int pad, int in_h, int in_w) {
  Shape xshape{gy.dim(0), w.dim(1), in_h, in_w};
  auto g = detail::conv_geometry(OpKind::kConvInputGrad, xshape, w.shape(),
                                 stride, pad);
  require(g.out_h == gy.dim(2) && g.out_w == gy.dim(3) &&
              g.out_c == gy.dim(1),
          "conv2d_input_grad: upstream shape " + shape_str(gy.shape()) +
              " inconsistent with target " + shape_str(xshape));
  configure_threads();
  const int64_t k = static_cast<int64_t>(g.in_c) * g.kh * g.kw;
  const int64_t ohw = static_cast<int64_t>(g.out_h) * g.out_w;
  const int64_t ncols = static_cast<int64_t>(g.batch) * ohw;
  auto& gmat = detail::scratch<T>(0);
  if (gmat.size() < static_cast<size_t>(g.out_c * ncols))
    gmat.resize(static_cast<size_t>(g.out_c * ncols));
  detail::pack_channel_major(gy.vals().data(), g.batch, g.out_c, ohw,
                             gmat.data());
  auto& cols = detail::scratch<T>(1);
  if (cols.size() < static_cast<size_t>(k * ncols))
    cols.resize(static_cast<size_t>(k * ncols));
  {
    detail::ECMap<T> mw(w.vals().data(), g.out_c, k);
    detail::ECMap<T> mg(gmat.data(), g.out_c, ncols);
    detail::EMap<T> mc(cols.data(), k, ncols);
    mc.noalias() = mw.transpose() * mg;
  }
  std::vector<T> out(static_cast<size_t>(shape_numel(xshape)), T(0));
  detail::col2im(cols.data(), g, out.data());
  const int kh = g.kh, kw = g.kw;
  return Tensor<T>::make_op(
      OpKind::kConvInputGrad, xshape, std::move(out), {gy, w},
      [gy, w, stride, pad, kh, kw](const Tensor<T>& u,
                                   const std::vector<char>& nd) {
        std::vector<Tensor<T>> gs(2);
        if (nd[0]) gs[0] = conv2d(u, w, stride, pad);
        if (nd[1]) gs[1] = conv2d_weight_grad(u, gy, stride, pad, kh, kw);
        return gs;
      });
}

// Adjoint of conv2d with respect to its kernel.
// x[B,Ci,H,W], gy[B,Co,OH,OW] -> [Co,Ci,kh,kw].  `cached_cols`, when given,
// must be im2col(x) for the same geometry.
template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& gy,
                             int stride, int pad, int kh, int kw,
                             const T* cached_cols) {
  Shape wshape{gy.dim(1), x.dim(1), kh, kw};
  auto g = detail::conv_geometry(OpKind::kConvWeightGrad, x.shape(), wshape,
                                 stride, pad);
  require(g.out_h == gy.dim(2) && g.out_w == gy.dim(3),
          "conv2d_weight_grad: upstream shape " + shape_str(gy.shape()) +
              " inconsistent with input " + shape_str(x.shape()));
  configure_threads();
  const int64_t k = static_cast<int64_t>(g.in_c) * g.kh * g.kw;
  const int64_t ohw = static_cast<int64_t>(g.out_h) * g.out_w;
  const int64_t ncols = static_cast<int64_t>(g.batch) * ohw;
  const T* cols = cached_cols;
  if (!cols) {
    auto& buf = detail::scratch<T>(0);
    if (buf.size() < static_cast<size_t>(k * ncols))
      buf.resize(static_cast<size_t>(k * ncols));
    detail::im2col(x.vals().data(), g, buf.data());
    cols = buf.data();
  }
  auto& gmat = detail::scratch<T>(1);
  if (gmat.size() < static_cast<size_t>(g.out_c * ncols))
    gmat.resize(static_cast<size_t>(g.out_c * ncols));
  detail::pack_channel_major(gy.vals().data(), g.batch, g.out_c, ohw,
                             gmat.data());
  std::vector<T> out(static_cast<size_t>(g.out_c * k));
  {
    detail::ECMap<T> mg(gmat.data(), g.out_c, ncols);
    detail::ECMap<T> mc(cols, k, ncols);
    detail::EMap<T> mo(out.data(), g.out_c, k);
    mo.noalias() = mg * mc.transpose();
  }
  return Tensor<T>::make_op(
      OpKind::kConvWeightGrad, wshape, std::move(out), {x, gy},
      [x, gy, stride, pad](const Tensor<T>& u,
                           const std::vector<char>& nd) {
        std::vector<Tensor<T>> gs(2);
        if (nd[0]) gs[0] = conv2d_input_grad(gy, u, stride, pad, x.dim(2), x.dim(3));
        if (nd[1]) gs[1] = conv2d(x, u, stride, pad);
        return gs;
      });
}

// Transposed convolution: x[B,Ci,H,W], w[Ci,Co,kh,kw] ->
// [B,Co,(H-1)*s-2p+kh, (W-1)*s-2p+kw].
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& w,
                           int stride, int pad) {
  require(x.rank() == 4 && w.rank() == 4,
          "conv2d_transpose: expected rank-4 input and kernel");
  require(w.dim(0) == x.dim(1),
          "conv2d_transpose: kernel leading dim " + std::to_string(w.dim(0)) +
              " must equal input channels " + std::to_string(x.dim(1)));
  const int oh = (x.dim(2) - 1) * stride - 2 * pad + w.dim(2);
  const int ow = (x.dim(3) - 1) * stride - 2 * pad + w.dim(3);
  return conv2d_input_grad(x, w, stride, pad, oh, ow);
}

// ---------------------------------------------------------------------------
// 2x2 max pooling (stride 2)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> max_unpool2x2(const Tensor<T>& g, std::shared_ptr<std::vector<int32_t>> idx, Shape in_shape);
template <typename T>
Tensor<T> max_gather2x2(const Tensor<T>& u, std::shared_ptr<std::vector<int32_t>> idx, Shape out_shape);

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x) {
  require(x.rank() == 4, "maxpool2x2: expected rank-4, got " +
                             shape_str(x.shape()));
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h % 2 == 0 && w % 2 == 0,
          "maxpool2x2: spatial dims must be even, got " +
              shape_str(x.shape()));
  const int oh = h / 2, ow = w / 2;
  Shape out_shape{b, c, oh, ow};
  std::vector<T> out(static_cast<size_t>(shape_numel(out_shape)));
  auto idx = std::make_shared<std::vector<int32_t>>(out.size());
  const auto& xv = x.vals();
  int64_t o = 0;
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const int64_t base = (static_cast<int64_t>(bi) * c + ci) * h * w;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const int64_t p = base + (2 * i) * static_cast<int64_t>(w) + 2 * j;
          int64_t best = p;
          T bv = xv[static_cast<size_t>(p)];
          const int64_t cand[3] = {p + 1, p + w, p + w + 1};
          for (int64_t q : cand)
            if (xv[static_cast<size_t>(q)] > bv) {
              bv = xv[static_cast<size_t>(q)];
              best = q;
            }
          out[static_cast<size_t>(o)] = bv;
          (*idx)[static_cast<size_t>(o)] = static_cast<int32_t>(best);
          ++o;
        }
    }
  Shape in_shape = x.shape();
  return Tensor<T>::make_op(
      OpKind::kMaxPool2x2, out_shape, std::move(out), {x},
      [idx, in_shape](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{max_unpool2x2(g, idx, in_shape)};
      });
}

// Scatters pooled gradients back to the argmax positions (2x2 windows are
// disjoint, so plain assignment).
template <typename T>
Tensor<T> max_unpool2x2(const Tensor<T>& g,
                        std::shared_ptr<std::vector<int32_t>> idx,
                        Shape in_shape) {
  require(static_cast<int64_t>(idx->size()) == g.size(),
          "maxunpool2x2: index/gradient size mismatch");
  std::vector<T> out(static_cast<size_t>(shape_numel(in_shape)), T(0));
  const auto& gv = g.vals();
  for (size_t i = 0; i < gv.size(); ++i)
    out[static_cast<size_t>((*idx)[i])] = gv[i];
  Shape gshape = g.shape();
  return Tensor<T>::make_op(
      OpKind::kMaxUnpool2x2, in_shape, std::move(out), {g},
      [idx, gshape](const Tensor<T>& u, const std::vector<char>& nd) {
        return std::vector<Tensor<T>>{max_gather2x2(u, idx, gshape)};
      });
}

template <typename T>
Tensor<T> max_gather2x2(const Tensor<T>& u,
                        std::shared_ptr<std::vector<int32_t>> idx,
                        Shape out_shape) {
  std::vector<T> out(idx->size());
  const auto& uv = u.vals();
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = uv[static_cast<size_t>((*idx)[i])];
  Shape ushape = u.shape();
  return Tensor<T>::make_op(
      OpKind::kMaxGather2x2, out_shape, std::move(out), {u},
      [idx, ushape](const Tensor<T>& g, const std::vector<char>&) {
        return std::vector<Tensor<T>>{max_unpool2x2(g, idx, ushape)};
      });
}

// ---------------------------------------------------------------------------
// Composite layers
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> bias_add_rows(const Tensor<T>& x, const Tensor<T>& b) {
  detail::check_rank2(OpKind::kAdd, x);
  return add(x, rep_rows(b, x.dim(0)));
}

template <typename T>
Tensor<T> bias_add_channels(const Tensor<T>& x, const Tensor<T>& b) {
  require(x.rank() == 4, "bias_add_channels: expected rank-4 input");
  return add(x, broadcast_channels(b, x.dim(0), x.dim(2), x.dim(3)));
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return bias_add_rows(matmul(x, w), b);
}

// Per-sample squared L2 norm over all trailing axes: [B,...] -> [B].
template <typename T>
Tensor<T> sumsq_per_sample(const Tensor<T>& x) {
  require(x.rank() >= 1, "sumsq_per_sample: need a batch axis");
  return row_sum(reshape(square(x), {x.dim(0), -1}));
}

// Per-sample L2 norm; the tiny floor keeps the sqrt differentiable at zero.
template <typename T>
Tensor<T> l2_norm_per_sample(const Tensor<T>& x) {
  return sqrt_(add_scalar(sumsq_per_sample(x), 1e-12));
}

// Inverted dropout: kept activations are scaled by 1/(1-rate) so eval needs
// no rescaling.  The mask is a constant drawn from the given stream.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, RngStream& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (rate == 0.0) return x;
  std::vector<T> mask(static_cast<size_t>(x.size()));
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask) m = rng.uniform() < rate ? T(0) : keep;
  return mul(x, Tensor<T>::from_data(x.shape(), std::move(mask)));
}

// x + N(0, std); the noise is a constant, so d(out)/dx = identity.
template <typename T>
Tensor<T> gaussian_noise_add(const Tensor<T>& x, double std, RngStream& rng) {
  require(std >= 0.0, "gaussian_noise_add: std must be non-negative");
  if (std == 0.0) return x;
  std::vector<T> noise(static_cast<size_t>(x.size()));
  rng.fill_normal(noise, 0.0, std);
  return add(x, Tensor<T>::from_data(x.shape(), std::move(noise)));
}

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;  // [C]
  Tensor<T> running_var;   // [C]
  double momentum = 0.9;
  void init(int channels) {
    running_mean = Tensor<T>::zeros({channels});
    running_var = Tensor<T>::full({channels}, T(1));
  }
};

// Batch normalization with per-channel batch statistics (training mode).
// Two-pass forward; the backward rule is the closed-form batch-norm
// gradient (it covers the dependence of the batch statistics on x):
//   dx = gamma*invstd * (g - mean_c(g) - xhat * mean_c(g*xhat))
//   dgamma = sum_c(g*xhat), dbeta = sum_c(g)
// where xhat is the normalized input and mean_c/sum_c reduce over
// batch and spatial axes.  Running statistics are tracked for
// evaluation-mode use.
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma,
                           const Tensor<T>& beta, BatchNormStats<T>* stats,
                           double eps = 1e-5) {
  require(x.rank() == 4, "batch_norm: expected rank-4 input");
  require(gamma.rank() == 1 && gamma.dim(0) == x.dim(1) &&
              beta.shape() == gamma.shape(),
          "batch_norm: gamma/beta must be [" + std::to_string(x.dim(1)) + "]");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t hw = static_cast<int64_t>(h) * w;
  const double inv_count = 1.0 / (static_cast<double>(b) * hw);
  const auto& xv = x.vals();

  std::vector<T> mu(static_cast<size_t>(c), T(0));
  std::vector<T> var(static_cast<size_t>(c), T(0));
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const T* p = xv.data() + (static_cast<int64_t>(bi) * c + ci) * hw;
      double s = 0.0, ss = 0.0;
      for (int64_t i = 0; i < hw; ++i) {
        s += p[i];
        ss += static_cast<double>(p[i]) * p[i];
      }
      mu[static_cast<size_t>(ci)] += static_cast<T>(s * inv_count);
      var[static_cast<size_t>(ci)] += static_cast<T>(ss * inv_count);
    }
  std::vector<T> invstd(static_cast<size_t>(c));
  for (int ci = 0; ci < c; ++ci) {
    var[static_cast<size_t>(ci)] -= mu[static_cast<size_t>(ci)] * mu[static_cast<size_t>(ci)];
    invstd[static_cast<size_t>(ci)] = static_cast<T>(
        1.0 / std::sqrt(static_cast<double>(var[static_cast<size_t>(ci)]) + eps));
  }

  std::vector<T> out(xv.size());
  SPOOFBENCH_OMP_FOR(static_cast<int64_t>(xv.size()) > detail::kParallelCutoff)
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const T* p = xv.data() + (static_cast<int64_t>(bi) * c + ci) * hw;
      T* o = out.data() + (static_cast<int64_t>(bi) * c + ci) * hw;
      const T m = mu[static_cast<size_t>(ci)];
      const T is = invstd[static_cast<size_t>(ci)];
      const T gm = gamma.vals()[static_cast<size_t>(ci)] * is;
      const T bt = beta.vals()[static_cast<size_t>(ci)];
      for (int64_t i = 0; i < hw; ++i) o[i] = gm * (p[i] - m) + bt;
    }

  if (stats) {
    auto& rm = stats->running_mean.mutable_vals();
    auto& rv = stats->running_var.mutable_vals();
    const double m = stats->momentum;
    for (size_t i = 0; i < rm.size(); ++i) {
      rm[i] = static_cast<T>(m * rm[i] + (1.0 - m) * mu[i]);
      rv[i] = static_cast<T>(m * rv[i] + (1.0 - m) * var[i]);
    }
  }

  Shape xshape = x.shape();
  return Tensor<T>::make_op(
      OpKind::kBatchNormTrain, xshape, std::move(out), {x, gamma, beta},
      [x, gamma, mu, invstd, b, c, h, w,
       hw](const Tensor<T>& g, const std::vector<char>& nd) {
        // normalized input as a constant (the closed form already accounts
        // for the statistics' dependence on x)
        std::vector<T> xhat(x.vals().size());
        const auto& xv2 = x.vals();
        SPOOFBENCH_OMP_FOR(static_cast<int64_t>(xhat.size()) >
                           detail::kParallelCutoff)
        for (int bi = 0; bi < b; ++bi)
          for (int ci = 0; ci < c; ++ci) {
            const int64_t base = (static_cast<int64_t>(bi) * c + ci) * hw;
            const T m = mu[static_cast<size_t>(ci)];
            const T is = invstd[static_cast<size_t>(ci)];
            for (int64_t i = 0; i < hw; ++i)
              xhat[static_cast<size_t>(base + i)] =
                  (xv2[static_cast<size_t>(base + i)] - m) * is;
          }
        Tensor<T> xh = Tensor<T>::from_data(x.shape(), std::move(xhat));
        const double count = static_cast<double>(b) * hw;

        std::vector<Tensor<T>> gs(3);
        Tensor<T> gxhat_mean = channel_mean(mul(g, xh));
        if (nd[0]) {
          std::vector<T> gscale(static_cast<size_t>(c));
          for (int ci = 0; ci < c; ++ci)
            gscale[static_cast<size_t>(ci)] =
                gamma.vals()[static_cast<size_t>(ci)] *
                invstd[static_cast<size_t>(ci)];
          Tensor<T> coef = Tensor<T>::from_data({c}, std::move(gscale));
          Tensor<T> inner = sub(
              sub(g, broadcast_channels(channel_mean(g), b, h, w)),
              mul(xh, broadcast_channels(gxhat_mean, b, h, w)));
          gs[0] = mul(broadcast_channels(coef, b, h, w), inner);
        }
        if (nd[1]) gs[1] = scale(gxhat_mean, count);
        if (nd[2]) gs[2] = scale(channel_mean(g), count);
        return gs;
      });
}

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& beta,
                          const BatchNormStats<T>& stats, double eps = 1e-5) {
  require(x.rank() == 4, "batch_norm: expected rank-4 input");
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor<T> xc =
      sub(x, broadcast_channels(stats.running_mean.detach(), b, h, w));
  Tensor<T> invstd =
      pow_(add_scalar(stats.running_var.detach(), eps), -0.5);
  Tensor<T> y = mul(xc, broadcast_channels(mul(gamma, invstd), b, h, w));
  return add(y, broadcast_channels(beta, b, h, w));
}

// ---------------------------------------------------------------------------
// Reverse-mode differentiation
// ---------------------------------------------------------------------------

// Gradients of a scalar with respect to each tensor in `wrt`.  Every `wrt`
// tensor must be a recorded graph member (requires_grad); tensors with no
// path to the scalar get zero gradients.  With create_graph=true the backward
// pass is recorded, so the returned gradients can be differentiated again.
template <typename T>
std::vector<Tensor<T>> grad(const Tensor<T>& output,
                            const std::vector<Tensor<T>>& wrt,
                            bool create_graph = false) {
  require(output.defined() && output.size() == 1,
          "grad: output must be a scalar, got " +
              (output.defined() ? shape_str(output.shape())
                                : std::string("undefined")));
  for (const auto& w : wrt)
    require(w.requires_grad(),
            "grad: a requested tensor is not a recorded member of the graph "
            "(requires_grad is false)");

  std::unordered_map<TensorNode<T>*, Tensor<T>> accum;
  std::vector<Tensor<T>> result(wrt.size());

  if (output.requires_grad()) {
    // Collect the reachable differentiable subgraph.
    std::vector<TensorNode<T>*> order;
    {
      std::vector<std::shared_ptr<TensorNode<T>>> stack{output.node()};
      std::unordered_set<TensorNode<T>*> seen{output.node().get()};
      while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        order.push_back(n.get());
        for (const auto& in : n->inputs) {
          if (in.requires_grad() && !seen.count(in.node().get())) {
            seen.insert(in.node().get());
            stack.push_back(in.node());
          }
        }
      }
    }
    std::sort(order.begin(), order.end(),
              [](TensorNode<T>* a, TensorNode<T>* b) { return a->id < b->id; });

    // A node is useful when some wrt tensor is reachable through it; only
    // useful branches get their gradients computed.
    std::unordered_set<TensorNode<T>*> useful;
    for (const auto& w : wrt) useful.insert(w.node().get());
    for (TensorNode<T>* n : order) {
      if (useful.count(n)) continue;
      for (const auto& in : n->inputs)
        if (useful.count(in.node().get())) {
          useful.insert(n);
          break;
        }
    }

    RecordGuard rec(create_graph);
    accum.emplace(output.node().get(),
                  Tensor<T>::full(output.shape(), T(1)));
    for (auto it_order = order.rbegin(); it_order != order.rend();
         ++it_order) {
      TensorNode<T>* n = *it_order;
      auto it = accum.find(n);
      if (it == accum.end() || !n->vjp || !useful.count(n)) continue;
      std::vector<char> needed(n->inputs.size(), 0);
      for (size_t i = 0; i < n->inputs.size(); ++i)
        needed[i] = n->inputs[i].requires_grad() &&
                    useful.count(n->inputs[i].node().get());
      std::vector<Tensor<T>> gs = n->vjp(it->second, needed);
      require(gs.size() == n->inputs.size(),
              std::string("grad: vjp arity mismatch for ") + op_name(n->op));
      for (size_t i = 0; i < gs.size(); ++i) {
        if (!needed[i] || !gs[i].defined()) continue;
        const auto& in = n->inputs[i];
        auto jt = accum.find(in.node().get());
        if (jt == accum.end())
          accum.emplace(in.node().get(), gs[i]);
        else
          jt->second = add(jt->second, gs[i]);
      }
    }
  }

  for (size_t i = 0; i < wrt.size(); ++i) {
    auto it = accum.find(wrt[i].node().get());
    result[i] = it != accum.end() ? it->second : Tensor<T>::zeros(wrt[i].shape());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

// Compares the analytic gradient of a scalar-valued function against central
// differences, component by component, and returns the worst relative error.
// The denominator is floored at 1e-3 so near-zero components are effectively
// compared absolutely.
template <typename T, typename Fn>
double finite_diff_check(Fn f, std::vector<Tensor<T>> inputs, double step) {
  for (auto& in : inputs) in.set_requires_grad(true);
  Tensor<T> out = f(inputs);
  require(out.size() == 1, "finite_diff_check: function must be scalar-valued");
  std::vector<Tensor<T>> analytic = grad(out, inputs);

  // Recording stays enabled during the numeric evaluations: f may contain an
  // inner grad() (the gradient-penalty path), which needs a recorded graph.
  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto& vals = inputs[i].mutable_vals();
    for (size_t j = 0; j < vals.size(); ++j) {
      const T orig = vals[j];
      vals[j] = static_cast<T>(orig + step);
      const double fp = static_cast<double>(f(inputs).item());
      vals[j] = static_cast<T>(orig - step);
      const double fm = static_cast<double>(f(inputs).item());
      vals[j] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = static_cast<double>(analytic[i].vals()[j]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Generic op dispatcher
// ---------------------------------------------------------------------------

struct OpAttrs {
  double scalar = 0.0;       // scale factor / additive constant / exponent / slope
  int stride = 1, pad = 0;   // convolution geometry
  int h = 0, w = 0;          // target spatial extent (conv2d_input_grad)
  int kh = 0, kw = 0;        // kernel extent (conv2d_weight_grad)
  int rows = 0;              // rep_rows / rep_cols / pad_rows extent
  int from = 0, to = 0;      // slice_rows range
  Shape shape;               // reshape / broadcast_scalar target
  std::vector<int> indices;  // pick_rows / scatter_rows labels
};

template <typename T>
Tensor<T> forward_op(OpKind kind, const std::vector<Tensor<T>>& in,
                     const OpAttrs& a = {}) {
  switch (kind) {
    case OpKind::kAdd: return add(in.at(0), in.at(1));
    case OpKind::kSub: return sub(in.at(0), in.at(1));
    case OpKind::kMul: return mul(in.at(0), in.at(1));
    case OpKind::kDiv: return divide(in.at(0), in.at(1));
    case OpKind::kNeg: return neg(in.at(0));
    case OpKind::kScale: return scale(in.at(0), a.scalar);
    case OpKind::kAddScalar: return add_scalar(in.at(0), a.scalar);
    case OpKind::kPow: return pow_(in.at(0), a.scalar);
    case OpKind::kMatmul: return matmul(in.at(0), in.at(1));
    case OpKind::kTranspose: return transpose(in.at(0));
    case OpKind::kRelu: return relu(in.at(0));
    case OpKind::kLeakyRelu: return leaky_relu(in.at(0), a.scalar);
    case OpKind::kTanh: return tanh_(in.at(0));
    case OpKind::kSigmoid: return sigmoid(in.at(0));
    case OpKind::kExp: return exp_(in.at(0));
    case OpKind::kLog: return log_(in.at(0));
    case OpKind::kSqrt: return sqrt_(in.at(0));
    case OpKind::kSoftmaxRows: return softmax_rows(in.at(0));
    case OpKind::kLogSoftmaxRows: return log_softmax_rows(in.at(0));
    case OpKind::kRowSum: return row_sum(in.at(0));
    case OpKind::kColSum: return col_sum(in.at(0));
    case OpKind::kRepRows: return rep_rows(in.at(0), a.rows);
    case OpKind::kRepCols: return rep_cols(in.at(0), a.rows);
    case OpKind::kSumAll: return sum_all(in.at(0));
    case OpKind::kBroadcastScalar: return broadcast_scalar(in.at(0), a.shape);
    case OpKind::kChannelMean: return channel_mean(in.at(0));
    case OpKind::kBroadcastChannels:
      return broadcast_channels(in.at(0), a.shape.at(0), a.shape.at(1),
                                a.shape.at(2));
    case OpKind::kPickRows: return pick_rows(in.at(0), a.indices);
    case OpKind::kScatterRows:
      return scatter_rows(in.at(0), a.indices, a.rows);
    case OpKind::kReshape: return reshape(in.at(0), a.shape);
    case OpKind::kConcatRows: return concat_rows(in.at(0), in.at(1));
    case OpKind::kSliceRows: return slice_rows(in.at(0), a.from, a.to);
    case OpKind::kPadRows: return pad_rows(in.at(0), a.from, a.rows);
    case OpKind::kConv2d: return conv2d(in.at(0), in.at(1), a.stride, a.pad);
    case OpKind::kConv2dBias:
      return conv2d_bias(in.at(0), in.at(1), in.at(2), a.stride, a.pad);
    case OpKind::kConvInputGrad:
      return conv2d_input_grad(in.at(0), in.at(1), a.stride, a.pad, a.h, a.w);
    case OpKind::kConvWeightGrad:
      return conv2d_weight_grad(in.at(0), in.at(1), a.stride, a.pad, a.kh,
                                a.kw);
    case OpKind::kMaxPool2x2: return maxpool2x2(in.at(0));
    case OpKind::kLeaf:
    case OpKind::kMaxUnpool2x2:
    case OpKind::kMaxGather2x2:
      break;
  }
  fail(std::string("forward_op: ") + op_name(kind) +
       " cannot be dispatched directly");
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_TENSOR_HPP_
