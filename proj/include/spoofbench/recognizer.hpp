// spoofbench/recognizer.hpp
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

#ifndef SPOOFBENCH_RECOGNIZER_HPP_
#define SPOOFBENCH_RECOGNIZER_HPP_

#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "spoofbench/adam.hpp"
#include "spoofbench/checkpoint.hpp"
#include "spoofbench/data.hpp"
#include "spoofbench/tensor.hpp"

// CNN multi-speaker classifier over 64x64 mel patches with a rejection
// ("other") class.  Layer plan:
//
//   conv 3x3x32 (same) + ReLU -> maxpool 2x2
//   conv 3x3x64 (same) + ReLU -> maxpool 2x2
//   flatten 16384 -> dense 1024 + ReLU   <- the deep-feature embedding
//   dropout 50% (training only)
//   dense n_classes -> softmax
//
// The 1024-dim post-ReLU activation of the first dense layer, taken before
// dropout, is the deep feature used by the attack harness.

namespace spoofbench {

constexpr int kPatchSide = 64;
constexpr int kDeepFeatureDim = 1024;

template <typename T>
struct CnnModel {
  Tensor<T> conv1_w, conv1_b;  // [32,1,3,3], [32]
  Tensor<T> conv2_w, conv2_b;  // [64,32,3,3], [64]
  Tensor<T> fc1_w, fc1_b;      // [16384,1024], [1024]
  Tensor<T> fc2_w, fc2_b;      // [1024,n], [n]
  std::vector<std::string> labels;  // class index -> name; one "other" entry
  int other_index = -1;

  int n_classes() const { return fc2_b.dim(0); }

  std::vector<Tensor<T>> params() {
    return {conv1_w, conv1_b, conv2_w, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b};
  }
  std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
    return {{"conv1_w", &conv1_w}, {"conv1_b", &conv1_b},
            {"conv2_w", &conv2_w}, {"conv2_b", &conv2_b},
            {"fc1_w", &fc1_w},     {"fc1_b", &fc1_b},
            {"fc2_w", &fc2_w},     {"fc2_b", &fc2_b}};
  }
};

struct RecTrainConfig {
  int epochs = 30;
  int batch = 64;
  AdamConfig adam{1e-4, 0.9, 0.999, 1e-8};
  double dropout = 0.5;
  double train_frac = 0.8;
  uint64_t seed = 0;
  int patience = 5;  // early stop after this many epochs without improvement

  void validate() const {
    require(dropout >= 0.0 && dropout < 1.0, "rec: dropout must be in [0,1)");
    require(train_frac > 0.0 && train_frac < 1.0,
            "rec: train fraction must be in (0,1)");
    require(epochs >= 1 && batch >= 1, "rec: epochs and batch must be >= 1");
  }
};

struct RecMetrics {
  std::vector<double> epoch_loss;      // mean train cross-entropy per epoch
  std::vector<double> epoch_test_acc;  // test accuracy per epoch
  double final_test_accuracy = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<int64_t> confusion;  // rows truth, cols prediction
  int n_classes = 0;
};

// Truncated-normal(0.05) weights, zero biases; deterministic given seed.
template <typename T>
CnnModel<T> build_cnn(int n_classes, uint64_t seed) {
  require(n_classes >= 2, "build_cnn: need at least 2 classes");
  CnnModel<T> m;
  auto init = [&](const char* name, const Shape& shape) {
    RngStream rng(seed, std::string("rec/init/") + name);
    std::vector<T> v(static_cast<size_t>(shape_numel(shape)));
    rng.fill_truncated_normal(v, 0.05);
    return Tensor<T>::from_data(shape, std::move(v)).set_requires_grad();
  };
  m.conv1_w = init("conv1_w", {32, 1, 3, 3});
  m.conv1_b = Tensor<T>::zeros({32}).set_requires_grad();
  m.conv2_w = init("conv2_w", {64, 32, 3, 3});
  m.conv2_b = Tensor<T>::zeros({64}).set_requires_grad();
  m.fc1_w = init("fc1_w", {16384, kDeepFeatureDim});
  m.fc1_b = Tensor<T>::zeros({kDeepFeatureDim}).set_requires_grad();
  m.fc2_w = init("fc2_w", {kDeepFeatureDim, n_classes});
  m.fc2_b = Tensor<T>::zeros({n_classes}).set_requires_grad();
  return m;
}

template <typename T>
struct RecForward {
  Tensor<T> logits;  // [B, n_classes]
  Tensor<T> deep;    // [B, 1024] post-ReLU, pre-dropout
};

// Forward pass to logits.  rng supplies the dropout mask and is only
// consulted in training mode.
template <typename T>
RecForward<T> cnn_forward(const CnnModel<T>& m, const Tensor<T>& x, bool train,
                          double dropout_rate = 0.5, RngStream* rng = nullptr) {
  require(x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == kPatchSide &&
              x.dim(3) == kPatchSide,
          "cnn_forward: expected [B,1,64,64], got " + shape_str(x.shape()));
  const int b = x.dim(0);

  Tensor<T> h = relu(conv2d_bias(x, m.conv1_w, m.conv1_b, 1, 1));
  require(h.shape() == Shape{b, 32, 64, 64}, "cnn: L1 shape broke");
  h = maxpool2x2(h);
  require(h.shape() == Shape{b, 32, 32, 32}, "cnn: L2 shape broke");
  h = relu(conv2d_bias(h, m.conv2_w, m.conv2_b, 1, 1));
  require(h.shape() == Shape{b, 64, 32, 32}, "cnn: L3 shape broke");
  h = maxpool2x2(h);
  require(h.shape() == Shape{b, 64, 16, 16}, "cnn: L4 shape broke");
  Tensor<T> flat = reshape(h, {b, 16384});

  RecForward<T> out;
  out.deep = relu(dense(flat, m.fc1_w, m.fc1_b));
  require(out.deep.shape() == Shape{b, kDeepFeatureDim}, "cnn: L5 shape broke");
  Tensor<T> d = out.deep;
  if (train && dropout_rate > 0.0) {
    require(rng != nullptr, "cnn_forward: training mode needs an RNG stream");
    d = dropout(d, dropout_rate, *rng);
  }
  out.logits = dense(d, m.fc2_w, m.fc2_b);
  return out;
}

// Probability matrix (softmax rows).
template <typename T>
Tensor<T> cnn_predict_proba(const CnnModel<T>& m, const Tensor<T>& x) {
  NoRecordGuard nr;
  return softmax_rows(cnn_forward(m, x, /*train=*/false).logits);
}

// The 1024-dim embedding for a batch of patches (eval mode).
template <typename T>
Tensor<T> deep_features(const CnnModel<T>& m, const Tensor<T>& x) {
  NoRecordGuard nr;
  return cnn_forward(m, x, /*train=*/false).deep;
}

template <typename T>
std::vector<float> deep_feature(const CnnModel<T>& m, const MelPatch& patch) {
  Tensor<T> x = patch_batch<T>({patch}, {0});
  Tensor<T> f = deep_features(m, x);
  std::vector<float> out(kDeepFeatureDim);
  for (int i = 0; i < kDeepFeatureDim; ++i)
    out[static_cast<size_t>(i)] = static_cast<float>(f.vals()[static_cast<size_t>(i)]);
  return out;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& probs) {
  std::vector<int> out(static_cast<size_t>(probs.dim(0)));
  const int f = probs.dim(1);
  for (int i = 0; i < probs.dim(0); ++i) {
    int best = 0;
    for (int j = 1; j < f; ++j)
      if (probs.vals()[static_cast<size_t>(i) * f + j] >
          probs.vals()[static_cast<size_t>(i) * f + best])
        best = j;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

// Accuracy plus confusion matrix (rows = ground truth, cols = prediction).
template <typename T>
EvalResult evaluate(const CnnModel<T>& m, const PatchDataset& ds,
                    const std::vector<int>& which) {
  require(!which.empty(), "evaluate: empty dataset");
  const int n = m.n_classes();
  EvalResult r;
  r.n_classes = n;
  r.confusion.assign(static_cast<size_t>(n) * n, 0);
  int64_t correct = 0;
  const int chunk = 64;
  for (size_t off = 0; off < which.size(); off += chunk) {
    std::vector<int> part(which.begin() + static_cast<long>(off),
                          which.begin() + static_cast<long>(std::min(
                              off + chunk, which.size())));
    Tensor<T> probs = cnn_predict_proba(m, patch_batch<T>(ds.patches, part));
    std::vector<int> pred = argmax_rows(probs);
    for (size_t i = 0; i < part.size(); ++i) {
      const int truth =
          static_cast<int>(ds.patches[static_cast<size_t>(part[i])].label);
      require(truth >= 0 && truth < n, "evaluate: label out of range");
      r.confusion[static_cast<size_t>(truth) * n + pred[i]] += 1;
      if (pred[i] == truth) ++correct;
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(which.size());
  return r;
}

// Adam + cross-entropy training with a stratified split and early stopping
// on the test-accuracy plateau.
template <typename T>
std::pair<CnnModel<T>, RecMetrics> train_recognizer(const PatchDataset& ds,
                                                    const RecTrainConfig& cfg,
                                                    bool verbose = false) {
  cfg.validate();
  TrainTestSplit split = stratified_split(ds, cfg.train_frac, cfg.seed);

  CnnModel<T> model = build_cnn<T>(ds.n_classes(), cfg.seed);
  model.labels = ds.class_names;
  model.other_index = ds.other_index;

  auto params = model.params();
  AdamState<T> opt;
  opt.cfg = cfg.adam;
  opt.init(params);

  RecMetrics metrics;
  double best_acc = -1.0;
  int stale = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream shuffle_rng(cfg.seed, "rec/shuffle", static_cast<uint64_t>(epoch));
    std::vector<int> order = split.train;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t n_batches = 0;
    for (size_t off = 0; off < order.size(); off += cfg.batch) {
      std::vector<int> batch(order.begin() + static_cast<long>(off),
                             order.begin() + static_cast<long>(std::min(
                                 off + cfg.batch, order.size())));
      Tensor<T> x = patch_batch<T>(ds.patches, batch);
      std::vector<int> y = batch_labels<T>(ds.patches, batch);
      RngStream drop_rng(cfg.seed, "rec/dropout", static_cast<uint64_t>(epoch),
                         static_cast<uint64_t>(off));
      RecForward<T> fwd =
          cnn_forward(model, x, /*train=*/true, cfg.dropout, &drop_rng);
      Tensor<T> nll =
          neg(mean_all(pick_rows(log_softmax_rows(fwd.logits), y)));
      const double loss = static_cast<double>(nll.item());
      if (!std::isfinite(loss))
        fail("train_recognizer: non-finite loss at epoch " +
             std::to_string(epoch) + ", batch offset " + std::to_string(off));
      auto grads = grad(nll, params);
      adam_step(params, grads, opt);
      loss_sum += loss;
      ++n_batches;
    }
    metrics.epoch_loss.push_back(loss_sum / static_cast<double>(n_batches));

    EvalResult ev = evaluate(model, ds, split.test);
    metrics.epoch_test_acc.push_back(ev.accuracy);
    if (verbose)
      std::fprintf(stderr, "[rec] epoch %d loss %.4f test-acc %.4f\n", epoch,
                   metrics.epoch_loss.back(), ev.accuracy);

    if (ev.accuracy > best_acc + 1e-4) {
      best_acc = ev.accuracy;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  metrics.final_test_accuracy = metrics.epoch_test_acc.back();
  return {std::move(model), std::move(metrics)};
}

// ---------------------------------------------------------------------------
// Checkpointing ("SPFB" + a label side file)
// ---------------------------------------------------------------------------

template <typename T>
void save_cnn(const std::string& path, CnnModel<T>& m) {
  std::vector<std::pair<std::string, NamedTensorF32>> tensors;
  for (auto& [name, p] : m.named_params()) tensors.emplace_back(name, to_f32(*p));
  save_checkpoint(path, tensors);
  std::ofstream os(path + ".labels");
  require(os.is_open(), "save_cnn: cannot write label table");
  for (size_t i = 0; i < m.labels.size(); ++i) os << m.labels[i] << "\n";
  require(static_cast<bool>(os), "save_cnn: label table write failed");
}

template <typename T>
CnnModel<T> load_cnn(const std::string& path) {
  CheckpointMap cp = load_checkpoint(path);
  auto it = cp.find("fc2_b");
  require(it != cp.end(), "load_cnn: checkpoint misses fc2_b");
  const int n_classes = it->second.shape.at(0);
  CnnModel<T> m = build_cnn<T>(n_classes, /*seed=*/0);
  for (auto& [name, p] : m.named_params()) load_into(cp, name, *p);

  std::ifstream is(path + ".labels");
  if (is.is_open()) {
    std::string line;
    m.labels.clear();
    while (std::getline(is, line))
      if (!line.empty()) m.labels.push_back(line);
    for (size_t i = 0; i < m.labels.size(); ++i)
      if (m.labels[i] == "other") m.other_index = static_cast<int>(i);
  }
  return m;
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_RECOGNIZER_HPP_
