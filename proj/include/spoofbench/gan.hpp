// spoofbench/gan.hpp
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

#ifndef SPOOFBENCH_GAN_HPP_
#define SPOOFBENCH_GAN_HPP_

#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "spoofbench/adam.hpp"
#include "spoofbench/checkpoint.hpp"
#include "spoofbench/csv.hpp"
#include "spoofbench/data.hpp"
#include "spoofbench/tensor.hpp"

// DCGAN-shaped generator/critic trained with the gradient-penalty
// Wasserstein objective, plus the mixed variant of the critic loss that
// additionally pushes real samples from non-target speakers toward the
// "fake" side:
//
//   E[D(fake)] + alpha * E[D(others)] - E[D(target)]
//     + lambda * E[(||grad_xhat D(xhat)||_2 - 1)^2]
//
// with xhat drawn on per-sample chords between target and fake batches.
// The penalty needs the exact derivative of a derivative, which the tensor
// engine provides by recording the backward pass as graph nodes.

namespace spoofbench {

constexpr int kDefaultLatentDim = 128;

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

// Generator ladder: z -> dense 4*4*256 -> 8x8x128 -> 16x16x64 -> 32x32x32
// -> 64x64x1.  Batch norm between blocks; final activation is ReLU because
// the outputs live in the DRC codomain [0, inf), not in [-1, 1].
template <typename T>
struct GeneratorModel {
  int latent_dim = kDefaultLatentDim;
  Tensor<T> fc_w, fc_b;    // [latent, 4096], [4096]
  Tensor<T> bn0_g, bn0_b;  // [256]
  Tensor<T> t1_w, t1_b;    // [256,128,4,4], [128]
  Tensor<T> bn1_g, bn1_b;
  Tensor<T> t2_w, t2_b;    // [128,64,4,4], [64]
  Tensor<T> bn2_g, bn2_b;
  Tensor<T> t3_w, t3_b;    // [64,32,4,4], [32]
  Tensor<T> bn3_g, bn3_b;
  Tensor<T> t4_w, t4_b;    // [32,1,4,4], [1]
  BatchNormStats<T> bn0, bn1, bn2, bn3;

  std::vector<Tensor<T>> params() {
    return {fc_w, fc_b, bn0_g, bn0_b, t1_w, t1_b, bn1_g, bn1_b,
            t2_w, t2_b, bn2_g, bn2_b, t3_w, t3_b, bn3_g, bn3_b,
            t4_w, t4_b};
  }
  std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
    return {{"fc_w", &fc_w},   {"fc_b", &fc_b},   {"bn0_g", &bn0_g},
            {"bn0_b", &bn0_b}, {"t1_w", &t1_w},   {"t1_b", &t1_b},
            {"bn1_g", &bn1_g}, {"bn1_b", &bn1_b}, {"t2_w", &t2_w},
            {"t2_b", &t2_b},   {"bn2_g", &bn2_g}, {"bn2_b", &bn2_b},
            {"t3_w", &t3_w},   {"t3_b", &t3_b},   {"bn3_g", &bn3_g},
            {"bn3_b", &bn3_b}, {"t4_w", &t4_w},   {"t4_b", &t4_b}};
  }
  std::vector<std::pair<std::string, Tensor<T>*>> named_stats() {
    return {{"bn0_rm", &bn0.running_mean}, {"bn0_rv", &bn0.running_var},
            {"bn1_rm", &bn1.running_mean}, {"bn1_rv", &bn1.running_var},
            {"bn2_rm", &bn2.running_mean}, {"bn2_rv", &bn2.running_var},
            {"bn3_rm", &bn3.running_mean}, {"bn3_rv", &bn3.running_var}};
  }
};

// Critic ladder: 64x64x1 -> 32x32x32 -> 16x16x64 -> 8x8x128 -> 4x4x256 ->
// dense -> scalar.  Leaky ReLU 0.2, no normalization (the penalty is
// per-sample; batch statistics would couple samples), no output
// nonlinearity.
template <typename T>
struct CriticModel {
  Tensor<T> c1_w, c1_b;  // [32,1,4,4], [32]
  Tensor<T> c2_w, c2_b;  // [64,32,4,4], [64]
  Tensor<T> c3_w, c3_b;  // [128,64,4,4], [128]
  Tensor<T> c4_w, c4_b;  // [256,128,4,4], [256]
  Tensor<T> fc_w, fc_b;  // [4096,1], [1]

  std::vector<Tensor<T>> params() {
    return {c1_w, c1_b, c2_w, c2_b, c3_w, c3_b, c4_w, c4_b, fc_w, fc_b};
  }
  std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
    return {{"c1_w", &c1_w}, {"c1_b", &c1_b}, {"c2_w", &c2_w},
            {"c2_b", &c2_b}, {"c3_w", &c3_w}, {"c3_b", &c3_b},
            {"c4_w", &c4_w}, {"c4_b", &c4_b}, {"fc_w", &fc_w},
            {"fc_b", &fc_b}};
  }
};

namespace detail {

template <typename T>
Tensor<T> init_normal(uint64_t seed, const std::string& name,
                      const Shape& shape, double std) {
  RngStream rng(seed, name);
  std::vector<T> v(static_cast<size_t>(shape_numel(shape)));
  rng.fill_normal(v, 0.0, std);
  return Tensor<T>::from_data(shape, std::move(v)).set_requires_grad();
}

template <typename T>
Tensor<T> zeros_param(const Shape& shape) {
  return Tensor<T>::zeros(shape).set_requires_grad();
}

template <typename T>
Tensor<T> ones_param(const Shape& shape) {
  return Tensor<T>::full(shape, T(1)).set_requires_grad();
}

}  // namespace detail

// Normal(0, 0.05) weight init, zero biases, unit batch-norm gains;
// deterministic given seed.
template <typename T>
GeneratorModel<T> build_generator(int latent_dim, uint64_t seed) {
  require(latent_dim >= 1, "build_generator: latent_dim must be >= 1");
  GeneratorModel<T> g;
  g.latent_dim = latent_dim;
  const double std = 0.05;
  g.fc_w = detail::init_normal<T>(seed, "gan/gen/fc_w", {latent_dim, 4096}, std);
  g.fc_b = detail::zeros_param<T>({4096});
  g.bn0_g = detail::ones_param<T>({256});
  g.bn0_b = detail::zeros_param<T>({256});
  g.t1_w = detail::init_normal<T>(seed, "gan/gen/t1_w", {256, 128, 4, 4}, std);
  g.t1_b = detail::zeros_param<T>({128});
  g.bn1_g = detail::ones_param<T>({128});
  g.bn1_b = detail::zeros_param<T>({128});
  g.t2_w = detail::init_normal<T>(seed, "gan/gen/t2_w", {128, 64, 4, 4}, std);
  g.t2_b = detail::zeros_param<T>({64});
  g.bn2_g = detail::ones_param<T>({64});
  g.bn2_b = detail::zeros_param<T>({64});
  g.t3_w = detail::init_normal<T>(seed, "gan/gen/t3_w", {64, 32, 4, 4}, std);
  g.t3_b = detail::zeros_param<T>({32});
  g.bn3_g = detail::ones_param<T>({32});
  g.bn3_b = detail::zeros_param<T>({32});
  g.t4_w = detail::init_normal<T>(seed, "gan/gen/t4_w", {32, 1, 4, 4}, std);
  g.t4_b = detail::zeros_param<T>({1});
  g.bn0.init(256);
  g.bn1.init(128);
  g.bn2.init(64);
  g.bn3.init(32);
  return g;
}

template <typename T>
CriticModel<T> build_critic(uint64_t seed, double init_std = 0.05) {
  CriticModel<T> c;
  c.c1_w = detail::init_normal<T>(seed, "gan/critic/c1_w", {32, 1, 4, 4}, init_std);
  c.c1_b = detail::zeros_param<T>({32});
  c.c2_w = detail::init_normal<T>(seed, "gan/critic/c2_w", {64, 32, 4, 4}, init_std);
  c.c2_b = detail::zeros_param<T>({64});
  c.c3_w = detail::init_normal<T>(seed, "gan/critic/c3_w", {128, 64, 4, 4}, init_std);
  c.c3_b = detail::zeros_param<T>({128});
  c.c4_w = detail::init_normal<T>(seed, "gan/critic/c4_w", {256, 128, 4, 4}, init_std);
  c.c4_b = detail::zeros_param<T>({256});
  c.fc_w = detail::init_normal<T>(seed, "gan/critic/fc_w", {4096, 1}, init_std);
  c.fc_b = detail::zeros_param<T>({1});
  return c;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> generator_forward(GeneratorModel<T>& g, const Tensor<T>& z,
                            bool train) {
  require(z.rank() == 2 && z.dim(1) == g.latent_dim,
          "generator: expected [B," + std::to_string(g.latent_dim) +
              "], got " + shape_str(z.shape()));
  const int b = z.dim(0);
  auto bn = [&](const Tensor<T>& x, const Tensor<T>& gm, const Tensor<T>& bt,
                BatchNormStats<T>& st) {
    return train ? batch_norm_train(x, gm, bt, &st)
                 : batch_norm_eval(x, gm, bt, st);
  };
  Tensor<T> h = reshape(dense(z, g.fc_w, g.fc_b), {b, 256, 4, 4});
  h = relu(bn(h, g.bn0_g, g.bn0_b, g.bn0));
  h = bias_add_channels(conv2d_transpose(h, g.t1_w, 2, 1), g.t1_b);
  h = relu(bn(h, g.bn1_g, g.bn1_b, g.bn1));
  h = bias_add_channels(conv2d_transpose(h, g.t2_w, 2, 1), g.t2_b);
  h = relu(bn(h, g.bn2_g, g.bn2_b, g.bn2));
  h = bias_add_channels(conv2d_transpose(h, g.t3_w, 2, 1), g.t3_b);
  h = relu(bn(h, g.bn3_g, g.bn3_b, g.bn3));
  h = relu(bias_add_channels(conv2d_transpose(h, g.t4_w, 2, 1), g.t4_b));
  require(h.shape() == Shape{b, 1, 64, 64}, "generator: output shape broke");
  return h;
}

// Scalar score per sample: [B,1,64,64] -> [B,1].
template <typename T>
Tensor<T> critic_forward(const CriticModel<T>& c, const Tensor<T>& x) {
  require(x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == 64 && x.dim(3) == 64,
          "critic: expected [B,1,64,64], got " + shape_str(x.shape()));
  const int b = x.dim(0);
  Tensor<T> h = leaky_relu(conv2d_bias(x, c.c1_w, c.c1_b, 2, 1), 0.2);
  h = leaky_relu(conv2d_bias(h, c.c2_w, c.c2_b, 2, 1), 0.2);
  h = leaky_relu(conv2d_bias(h, c.c3_w, c.c3_b, 2, 1), 0.2);
  h = leaky_relu(conv2d_bias(h, c.c4_w, c.c4_b, 2, 1), 0.2);
  return dense(reshape(h, {b, 4096}), c.fc_w, c.fc_b);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct CriticLossConfig {
  enum class Mode { kPlain, kMixed };
  double lambda = 10.0;  // gradient-penalty weight
  double alpha = 0.0;    // different-speakers weight (mixed mode)
  Mode mode = Mode::kPlain;

  void validate() const {
    require(lambda >= 0.0 && alpha >= 0.0,
            "critic loss: lambda and alpha must be non-negative");
  }
};

// Generator objective: -E[D(fake)].
template <typename T>
Tensor<T> generator_loss(const CriticModel<T>& critic, const Tensor<T>& fake) {
  return neg(mean_all(critic_forward(critic, fake)));
}

// Per-sample chord points xhat_i = eps_i*real_i + (1-eps_i)*fake_i with
// eps ~ U[0,1].  Returned as a fresh leaf so the penalty can differentiate
// with respect to it.
template <typename T>
Tensor<T> interpolate(const Tensor<T>& real, const Tensor<T>& fake,
                      RngStream& rng) {
  require(real.shape() == fake.shape(),
          "interpolate: shape mismatch " + shape_str(real.shape()) + " vs " +
              shape_str(fake.shape()));
  const int b = real.dim(0);
  const int64_t per = real.size() / b;
  std::vector<T> out(static_cast<size_t>(real.size()));
  for (int i = 0; i < b; ++i) {
    const T eps = static_cast<T>(rng.uniform());
    const T* rp = real.vals().data() + static_cast<int64_t>(i) * per;
    const T* fp = fake.vals().data() + static_cast<int64_t>(i) * per;
    T* op = out.data() + static_cast<int64_t>(i) * per;
    for (int64_t j = 0; j < per; ++j)
      op[j] = eps * rp[j] + (T(1) - eps) * fp[j];
  }
  return Tensor<T>::from_data(real.shape(), std::move(out));
}

template <typename T>
struct CriticLossOut {
  Tensor<T> loss;
  double wasserstein = 0.0;    // E[D(real)] - E[D(fake)], penalty excluded
  double penalty = 0.0;        // mean (||grad||-1)^2
  double grad_norm_mean = 0.0; // mean per-sample ||grad_xhat D||
};

// Critic objective, plain or mixed.  The gradient of D at the chord points
// is obtained with create_graph so the penalty stays differentiable with
// respect to the critic parameters.  In mixed mode the penalty still
// interpolates between the (target) real batch and fakes only.
template <typename T>
CriticLossOut<T> critic_loss(const CriticModel<T>& critic,
                             const Tensor<T>& real, const Tensor<T>& fake,
                             const Tensor<T>* others,
                             const CriticLossConfig& cfg, RngStream& eps_rng) {
  cfg.validate();
  if (cfg.mode == CriticLossConfig::Mode::kMixed)
    require(others != nullptr && others->defined(),
            "critic_loss: mixed mode requires an others batch");

  // One forward over the concatenated batches: per-sample scores are
  // independent, so slicing afterwards is equivalent to separate passes.
  // With alpha == 0 the others batch is left out entirely, which keeps the
  // mixed loss bit-identical to the plain loss.
  const int b = real.dim(0);
  const bool with_others =
      cfg.mode == CriticLossConfig::Mode::kMixed && cfg.alpha != 0.0;
  Tensor<T> stacked = concat_rows(real, fake);
  if (with_others) stacked = concat_rows(stacked, *others);
  Tensor<T> scores = critic_forward(critic, stacked);

  CriticLossOut<T> out;
  Tensor<T> mean_real = mean_all(slice_rows(scores, 0, b));
  Tensor<T> mean_fake = mean_all(slice_rows(scores, b, 2 * b));
  Tensor<T> loss = sub(mean_fake, mean_real);
  out.wasserstein = static_cast<double>(mean_real.item()) -
                    static_cast<double>(mean_fake.item());
  if (with_others) {
    Tensor<T> mean_others =
        mean_all(slice_rows(scores, 2 * b, 2 * b + others->dim(0)));
    loss = add(loss, scale(mean_others, cfg.alpha));
  }

  if (cfg.lambda != 0.0) {
    Tensor<T> xhat = interpolate(real, fake, eps_rng).set_requires_grad();
    Tensor<T> score_sum = sum_all(critic_forward(critic, xhat));
    Tensor<T> gx =
        grad(score_sum, std::vector<Tensor<T>>{xhat}, /*create_graph=*/true)[0];
    Tensor<T> norms = l2_norm_per_sample(gx);
    Tensor<T> pen = mean_all(square(add_scalar(norms, -1.0)));
    out.penalty = static_cast<double>(pen.item());
    double ns = 0.0;
    for (T v : norms.vals()) ns += static_cast<double>(v);
    out.grad_norm_mean = ns / norms.size();
    loss = add(loss, scale(pen, cfg.lambda));
  }

  out.loss = loss;
  require(std::isfinite(static_cast<double>(out.loss.item())),
          "critic_loss: non-finite loss");
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct GanTrainConfig {
  int critic_iters = 5;   // 20 in mixed mode
  int batch = 64;
  AdamConfig gen_adam{1e-4, 0.0, 0.9, 1e-8};     // 3e-4 in mixed mode
  AdamConfig critic_adam{1e-4, 0.0, 0.9, 1e-8};
  double sigma_rel = 0.0;  // target-noise std relative to dataset value std
  int iterations = 2000;   // generator iterations
  int latent_dim = kDefaultLatentDim;
  uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 = no periodic checkpoints
  std::string checkpoint_dir;
  bool verbose = false;

  void validate() const {
    require(critic_iters >= 1, "gan: critic_iters must be >= 1");
    require(batch >= 1 && iterations >= 0, "gan: bad batch/iterations");
    require(sigma_rel >= 0.0, "gan: sigma must be non-negative");
  }
};

// Design-decision defaults per loss mode: plain keeps 5 critic iterations
// and generator lr 1e-4; mixed uses 20 critic iterations, a raised generator
// lr of 3e-4, and target noise sigma 0.02.
inline GanTrainConfig make_gan_config(CriticLossConfig::Mode mode) {
  GanTrainConfig cfg;
  if (mode == CriticLossConfig::Mode::kMixed) {
    cfg.critic_iters = 20;
    cfg.gen_adam.lr = 3e-4;
    cfg.sigma_rel = 0.02;
  }
  return cfg;
}

struct GanTraceRow {
  int iteration = 0;
  double critic_loss = 0.0;     // mean over the critic iterations
  double generator_loss = 0.0;
  double penalty_mean = 0.0;
  double grad_norm_mean = 0.0;
};

template <typename T>
struct GanTrainResult {
  GeneratorModel<T> gen;
  CriticModel<T> critic;
  std::vector<GanTraceRow> trace;
};

template <typename T>
void save_generator(const std::string& path, GeneratorModel<T>& g) {
  std::vector<std::pair<std::string, NamedTensorF32>> tensors;
  for (auto& [name, p] : g.named_params()) tensors.emplace_back(name, to_f32(*p));
  for (auto& [name, p] : g.named_stats()) tensors.emplace_back(name, to_f32(*p));
  save_checkpoint(path, tensors);
}

template <typename T>
GeneratorModel<T> load_generator(const std::string& path) {
  CheckpointMap cp = load_checkpoint(path);
  auto it = cp.find("fc_w");
  require(it != cp.end(), "load_generator: checkpoint misses fc_w");
  GeneratorModel<T> g = build_generator<T>(it->second.shape.at(0), 0);
  for (auto& [name, p] : g.named_params()) load_into(cp, name, *p);
  for (auto& [name, p] : g.named_stats()) load_into(cp, name, *p);
  return g;
}

template <typename T>
void save_critic(const std::string& path, CriticModel<T>& c) {
  std::vector<std::pair<std::string, NamedTensorF32>> tensors;
  for (auto& [name, p] : c.named_params()) tensors.emplace_back(name, to_f32(*p));
  save_checkpoint(path, tensors);
}

template <typename T>
CriticModel<T> load_critic(const std::string& path) {
  CheckpointMap cp = load_checkpoint(path);
  CriticModel<T> c = build_critic<T>(0);
  for (auto& [name, p] : c.named_params()) load_into(cp, name, *p);
  return c;
}

namespace detail {

// Uniform draw of `batch` patch indices with replacement.
inline std::vector<int> draw_batch(size_t n, int batch, RngStream& rng) {
  std::vector<int> idx(static_cast<size_t>(batch));
  for (auto& i : idx) i = static_cast<int>(rng.index(n));
  return idx;
}

template <typename T>
double value_std(const std::vector<MelPatch>& patches) {
  double sum = 0.0, sumsq = 0.0;
  int64_t n = 0;
  for (const auto& p : patches)
    for (float v : p.values) {
      sum += v;
      sumsq += static_cast<double>(v) * v;
      ++n;
    }
  if (n == 0) return 0.0;
  const double mean = sum / static_cast<double>(n);
  return std::sqrt(std::max(0.0, sumsq / static_cast<double>(n) - mean * mean));
}

template <typename T>
Tensor<T> latent_batch(int batch, int latent_dim, RngStream& rng) {
  std::vector<T> z(static_cast<size_t>(batch) * latent_dim);
  rng.fill_normal(z, 0.0, 1.0);
  return Tensor<T>::from_data({batch, latent_dim}, std::move(z));
}

}  // namespace detail

// Shared alternating loop: critic_iters critic Adam steps per generator
// step.  `target` supplies the real batches (with optional Gaussian noise);
// `others`, when non-null, supplies the different-speakers batches of the
// mixed loss.  Aborts on non-finite losses; periodic checkpoints are kept so
// the last one survives an abort.
template <typename T>
GanTrainResult<T> train_gan(const std::vector<MelPatch>& target,
                            const std::vector<MelPatch>* others,
                            const GanTrainConfig& cfg,
                            const CriticLossConfig& loss_cfg) {
  cfg.validate();
  loss_cfg.validate();
  require(!target.empty(), "train_gan: empty training set");
  if (loss_cfg.mode == CriticLossConfig::Mode::kMixed)
    require(others != nullptr && !others->empty(),
            "train_gan: mixed mode requires a non-empty others set");

  GanTrainResult<T> result;
  result.gen = build_generator<T>(cfg.latent_dim, cfg.seed);
  result.critic = build_critic<T>(cfg.seed);
  auto gen_params = result.gen.params();
  auto critic_params = result.critic.params();
  AdamState<T> gen_opt, critic_opt;
  gen_opt.cfg = cfg.gen_adam;
  critic_opt.cfg = cfg.critic_adam;
  gen_opt.init(gen_params);
  critic_opt.init(critic_params);

  const double sigma = cfg.sigma_rel * detail::value_std<T>(target);

  auto checkpoint = [&](int iter) {
    if (cfg.checkpoint_dir.empty()) return;
    save_generator(cfg.checkpoint_dir + "/generator_latest.spfb", result.gen);
    save_critic(cfg.checkpoint_dir + "/critic_latest.spfb", result.critic);
    if (cfg.verbose)
      std::fprintf(stderr, "[gan] checkpoint at iteration %d\n", iter);
  };

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    double closs_acc = 0.0, pen_acc = 0.0, norm_acc = 0.0;
    for (int k = 0; k < cfg.critic_iters; ++k) {
      const uint64_t step = static_cast<uint64_t>(iter) *
                                static_cast<uint64_t>(cfg.critic_iters) +
                            static_cast<uint64_t>(k);
      // fake batch: generator runs unrecorded, no generator gradients
      Tensor<T> fake;
      {
        NoRecordGuard nr;
        RngStream zrng(cfg.seed, "gan/z-critic", step);
        fake = generator_forward(
            result.gen,
            detail::latent_batch<T>(cfg.batch, cfg.latent_dim, zrng), true);
      }
      RngStream rrng(cfg.seed, "gan/real", step);
      Tensor<T> real =
          patch_batch<T>(target, detail::draw_batch(target.size(), cfg.batch, rrng));
      if (sigma > 0.0) {
        RngStream nrng(cfg.seed, "gan/noise", step);
        NoRecordGuard nr;
        real = gaussian_noise_add(real, sigma, nrng);
      }
      Tensor<T> others_batch;
      if (loss_cfg.mode == CriticLossConfig::Mode::kMixed) {
        RngStream orng(cfg.seed, "gan/others", step);
        others_batch = patch_batch<T>(
            *others, detail::draw_batch(others->size(), cfg.batch, orng));
      }
      RngStream eps_rng(cfg.seed, "gan/eps", step);
      CriticLossOut<T> out;
      try {
        out = critic_loss(result.critic, real, fake,
                          others_batch.defined() ? &others_batch : nullptr,
                          loss_cfg, eps_rng);
      } catch (const Error&) {
        checkpoint(iter);
        throw;
      }
      auto grads = grad(out.loss, critic_params);
      adam_step(critic_params, grads, critic_opt);
      closs_acc += static_cast<double>(out.loss.item());
      pen_acc += out.penalty;
      norm_acc += out.grad_norm_mean;
    }

    // generator step
    RngStream zrng(cfg.seed, "gan/z-gen", static_cast<uint64_t>(iter));
    Tensor<T> fake = generator_forward(
        result.gen, detail::latent_batch<T>(cfg.batch, cfg.latent_dim, zrng),
        true);
    Tensor<T> gloss = generator_loss(result.critic, fake);
    const double gl = static_cast<double>(gloss.item());
    if (!std::isfinite(gl)) {
      checkpoint(iter);
      fail("train_gan: non-finite generator loss at iteration " +
           std::to_string(iter));
    }
    auto ggrads = grad(gloss, gen_params);
    adam_step(gen_params, ggrads, gen_opt);

    GanTraceRow row;
    row.iteration = iter;
    row.critic_loss = closs_acc / cfg.critic_iters;
    row.generator_loss = gl;
    row.penalty_mean = pen_acc / cfg.critic_iters;
    row.grad_norm_mean = norm_acc / cfg.critic_iters;
    result.trace.push_back(row);
    if (cfg.verbose && (iter % 50 == 0 || iter + 1 == cfg.iterations))
      std::fprintf(stderr,
                   "[gan] iter %d critic %.4f gen %.4f penalty %.4f |grad| %.3f\n",
                   iter, row.critic_loss, row.generator_loss, row.penalty_mean,
                   row.grad_norm_mean);
    if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0)
      checkpoint(iter);
  }
  checkpoint(cfg.iterations);
  return result;
}

// Untargeted setup: one pooled all-speaker dataset, plain loss.
template <typename T>
GanTrainResult<T> train_untargeted(const std::vector<MelPatch>& data,
                                   const GanTrainConfig& cfg) {
  CriticLossConfig loss_cfg;  // plain
  return train_gan<T>(data, nullptr, cfg, loss_cfg);
}

// Targeted setup: target-speaker batches (noise-regularized via sigma)
// against uniformly drawn other-speaker batches under the mixed loss, or the
// plain baseline when loss_cfg.mode is kPlain.
template <typename T>
GanTrainResult<T> train_targeted(const std::vector<MelPatch>& target,
                                 const std::vector<MelPatch>& others,
                                 const GanTrainConfig& cfg,
                                 const CriticLossConfig& loss_cfg) {
  return train_gan<T>(target, &others, cfg, loss_cfg);
}

// n patches from i.i.d. latents; values clamped to the DRC codomain.
template <typename T>
std::vector<MelPatch> sample_patches(GeneratorModel<T>& g, int n,
                                     uint64_t seed) {
  require(n >= 0, "sample: n must be non-negative");
  std::vector<MelPatch> out;
  out.reserve(static_cast<size_t>(n));
  NoRecordGuard nr;
  int done = 0;
  uint64_t chunk_id = 0;
  while (done < n) {
    const int b = std::min(64, n - done);
    RngStream zrng(seed, "gan/sample-z", chunk_id++);
    Tensor<T> x =
        generator_forward(g, detail::latent_batch<T>(b, g.latent_dim, zrng),
                          /*train=*/false);
    for (int i = 0; i < b; ++i) {
      MelPatch p;
      p.values.resize(64 * 64);
      for (int j = 0; j < 64 * 64; ++j) {
        const T v = x.vals()[static_cast<size_t>(i) * 64 * 64 + j];
        p.values[static_cast<size_t>(j)] =
            std::max(0.0f, static_cast<float>(v));
      }
      out.push_back(std::move(p));
    }
    done += b;
  }
  return out;
}

inline void write_gan_trace_csv(const std::string& path,
                                const std::vector<GanTraceRow>& trace) {
  CsvWriter csv(path);
  csv.field(std::string("iteration"))
      .field(std::string("critic_loss"))
      .field(std::string("generator_loss"))
      .field(std::string("penalty_mean"))
      .field(std::string("grad_norm_mean"));
  csv.endrow();
  for (const auto& r : trace) {
    csv.field(r.iteration)
        .field(r.critic_loss)
        .field(r.generator_loss)
        .field(r.penalty_mean)
        .field(r.grad_norm_mean);
    csv.endrow();
  }
  csv.close();
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_GAN_HPP_
