#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "spoofbench/gan.hpp"

using namespace spoofbench;
using Catch::Approx;

namespace {

std::vector<MelPatch> random_patches(int n, uint64_t seed, double hi = 5.0) {
  RngStream rng(seed, "gan-test/patches");
  std::vector<MelPatch> out(static_cast<size_t>(n));
  for (auto& p : out) {
    p.values.resize(64 * 64);
    for (auto& v : p.values) v = static_cast<float>(rng.uniform(0.0, hi));
  }
  return out;
}

// Critic whose score is exactly sum(x)/64 for non-negative inputs: each conv
// stage sums disjoint 2x2 blocks through one channel (kernel ones at offsets
// 1..2 with stride 2, pad 1), so the activations stay non-negative and the
// leaky ReLUs are exact identities.  The gradient is 1/64 everywhere, giving
// a per-sample gradient norm of exactly sqrt(4096)/64 = 1.
template <typename T>
CriticModel<T> linear_sum_critic() {
  CriticModel<T> c = build_critic<T>(0, 0.0);  // all zeros
  auto block = [](Tensor<T>& w) {
    auto& v = w.mutable_vals();
    const int ci_count = w.dim(1);
    // channel 0 <- channel 0, ones over the centered 2x2 taps
    for (int ki = 1; ki <= 2; ++ki)
      for (int kj = 1; kj <= 2; ++kj)
        v[static_cast<size_t>(((0 * ci_count + 0) * 4 + ki) * 4 + kj)] = T(1);
  };
  block(c.c1_w);
  block(c.c2_w);
  block(c.c3_w);
  block(c.c4_w);
  auto& fw = c.fc_w.mutable_vals();
  // fc input layout: channel-major [256,4,4]; channel 0 occupies the first 16
  for (int i = 0; i < 16; ++i) fw[static_cast<size_t>(i)] = T(1) / T(64);
  return c;
}

}  // namespace

TEST_CASE("generator shapes and determinism") {
  auto g = build_generator<float>(128, 5);
  REQUIRE(g.fc_w.shape() == Shape{128, 4096});
  RngStream z(5, "gan-test/z");
  Tensor<float> out =
      generator_forward(g, detail::latent_batch<float>(7, 128, z), true);
  REQUIRE(out.shape() == Shape{7, 1, 64, 64});

  auto g2 = build_generator<float>(128, 5);
  REQUIRE(g.fc_w.vals() == g2.fc_w.vals());
  REQUIRE(g.t3_w.vals() == g2.t3_w.vals());

  auto g3 = build_generator<float>(64, 5);
  REQUIRE(g3.fc_w.shape() == Shape{64, 4096});
}

TEST_CASE("critic maps a batch to one score per sample") {
  auto c = build_critic<float>(9);
  auto data = random_patches(3, 1);
  Tensor<float> x = patch_batch<float>(data, {0, 1, 2});
  NoRecordGuard nr;
  Tensor<float> s = critic_forward(c, x);
  REQUIRE(s.shape() == Shape{3, 1});
}

TEST_CASE("generator loss is minus the mean critic score") {
  auto c = build_critic<float>(0, 0.0);  // zero critic: D == fc_b
  c.fc_b.mutable_vals()[0] = 2.5f;
  auto data = random_patches(1, 2);
  NoRecordGuard nr;
  Tensor<float> x = patch_batch<float>(data, {0});
  REQUIRE(generator_loss(c, x).item() == Approx(-2.5).margin(1e-6));

  c.fc_b.mutable_vals()[0] = 5.0f;  // doubling the critic doubles the loss
  REQUIRE(generator_loss(c, x).item() == Approx(-5.0).margin(1e-6));
}

TEST_CASE("interpolation draws per-sample chord points") {
  auto ones = random_patches(4, 3);
  for (auto& p : ones) p.values.assign(64 * 64, 1.0f);
  auto zeros = ones;
  for (auto& p : zeros) p.values.assign(64 * 64, 0.0f);
  Tensor<float> real = patch_batch<float>(ones, {0, 1, 2, 3});
  Tensor<float> fake = patch_batch<float>(zeros, {0, 1, 2, 3});

  RngStream e1(7, "gan-test/eps");
  Tensor<float> xh = interpolate(real, fake, e1);
  // with real=1, fake=0 the output IS eps, constant within a sample
  for (int i = 0; i < 4; ++i) {
    const float eps = xh.vals()[static_cast<size_t>(i) * 64 * 64];
    REQUIRE(eps >= 0.0f);
    REQUIRE(eps < 1.0f);
    for (int j = 1; j < 64 * 64; ++j)
      REQUIRE(xh.vals()[static_cast<size_t>(i) * 64 * 64 + j] == eps);
  }
  RngStream e2(7, "gan-test/eps");
  Tensor<float> xh2 = interpolate(real, fake, e2);
  REQUIRE(xh.vals() == xh2.vals());

  // real == fake stays fixed for any eps
  RngStream e3(9, "gan-test/eps");
  Tensor<float> same = interpolate(real, real, e3);
  REQUIRE(same.vals() == real.vals());
}

TEST_CASE("mixed loss with alpha zero equals the plain loss bit-for-bit") {
  auto critic = build_critic<float>(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto real = random_patches(4, 100 + trial);
    auto fake = random_patches(4, 200 + trial);
    auto others = random_patches(4, 300 + trial);
    Tensor<float> r = patch_batch<float>(real, {0, 1, 2, 3});
    Tensor<float> f = patch_batch<float>(fake, {0, 1, 2, 3});
    Tensor<float> o = patch_batch<float>(others, {0, 1, 2, 3});

    CriticLossConfig plain;
    CriticLossConfig mixed;
    mixed.mode = CriticLossConfig::Mode::kMixed;
    mixed.alpha = 0.0;

    RngStream ea(50 + trial, "gan-test/eps2");
    RngStream eb(50 + trial, "gan-test/eps2");
    auto lp = critic_loss<float>(critic, r, f, nullptr, plain, ea);
    auto lm = critic_loss<float>(critic, r, f, &o, mixed, eb);
    REQUIRE(lp.loss.item() == lm.loss.item());  // exact
  }
}

TEST_CASE("mixed mode without an others batch is rejected") {
  auto critic = build_critic<float>(1);
  auto real = random_patches(2, 5);
  auto fake = random_patches(2, 6);
  Tensor<float> r = patch_batch<float>(real, {0, 1});
  Tensor<float> f = patch_batch<float>(fake, {0, 1});
  CriticLossConfig mixed;
  mixed.mode = CriticLossConfig::Mode::kMixed;
  mixed.alpha = 1.0;
  RngStream e(1, "gan-test/eps3");
  REQUIRE_THROWS_AS(critic_loss<float>(critic, r, f, nullptr, mixed, e),
                    Error);
}

TEST_CASE("loss without penalty matches the score means") {
  auto critic = build_critic<float>(33);
  auto real = random_patches(4, 7);
  auto fake = random_patches(4, 8);
  Tensor<float> r = patch_batch<float>(real, {0, 1, 2, 3});
  Tensor<float> f = patch_batch<float>(fake, {0, 1, 2, 3});
  double mr = 0.0, mf = 0.0;
  {
    NoRecordGuard nr;
    Tensor<float> sr = critic_forward(critic, r);
    Tensor<float> sf = critic_forward(critic, f);
    for (float v : sr.vals()) mr += v / 4.0;
    for (float v : sf.vals()) mf += v / 4.0;
  }

  CriticLossConfig cfg;
  cfg.lambda = 0.0;
  RngStream e(3, "gan-test/eps4");
  auto out = critic_loss<float>(critic, r, f, nullptr, cfg, e);
  REQUIRE(out.loss.item() == Approx(mf - mr).margin(2e-4));
  REQUIRE(out.wasserstein == Approx(mr - mf).margin(2e-4));
}

TEST_CASE("a unit-gradient critic has zero gradient penalty") {
  auto critic = linear_sum_critic<float>();
  auto real = random_patches(4, 11);
  auto fake = random_patches(4, 12);
  Tensor<float> r = patch_batch<float>(real, {0, 1, 2, 3});
  Tensor<float> f = patch_batch<float>(fake, {0, 1, 2, 3});

  // sanity: the handcrafted critic really is x -> sum(x)/64
  {
    NoRecordGuard nr;
    Tensor<float> s = critic_forward(critic, r);
    for (int i = 0; i < 4; ++i) {
      double total = 0.0;
      for (int j = 0; j < 64 * 64; ++j)
        total += r.vals()[static_cast<size_t>(i) * 64 * 64 + j];
      REQUIRE(s.vals()[static_cast<size_t>(i)] ==
              Approx(total / 64.0).epsilon(1e-4));
    }
  }

  CriticLossConfig cfg;  // lambda 10
  RngStream e(5, "gan-test/eps5");
  auto out = critic_loss<float>(critic, r, f, nullptr, cfg, e);
  REQUIRE(out.penalty == Approx(0.0).margin(1e-6));
  REQUIRE(out.grad_norm_mean == Approx(1.0).margin(1e-4));
}

TEST_CASE("the full critic loss gradient passes central differences on a reduced critic") {
  // 8x8 two-layer critic, full loss with both alpha and lambda active
  using Tn = Tensor<double>;
  RngStream rng(41, "gan-test/fd");
  auto randt = [&](const Shape& s, double scale) {
    std::vector<double> v(static_cast<size_t>(shape_numel(s)));
    rng.fill_uniform(v, -scale, scale);
    return Tn::from_data(s, std::move(v));
  };
  Tn real = randt({4, 1, 8, 8}, 1.0);
  Tn fake = randt({4, 1, 8, 8}, 1.0);
  Tn others = randt({4, 1, 8, 8}, 1.0);
  std::vector<Tn> params{randt({4, 1, 4, 4}, 0.4),  randt({4}, 0.1),
                         randt({8, 4, 4, 4}, 0.4),  randt({8}, 0.1),
                         randt({32, 1}, 0.4),       randt({1}, 0.1)};
  const double alpha = 1.0, lambda = 10.0;

  auto critic_fn = [](const std::vector<Tn>& p, const Tn& x) {
    Tn h = leaky_relu(conv2d_bias(x, p[0], p[1], 2, 1), 0.2);
    h = leaky_relu(conv2d_bias(h, p[2], p[3], 2, 1), 0.2);
    return dense(reshape(h, {x.dim(0), 32}), p[4], p[5]);
  };
  auto f = [&](const std::vector<Tn>& p) {
    Tn loss = sub(mean_all(critic_fn(p, fake)), mean_all(critic_fn(p, real)));
    loss = add(loss, scale(mean_all(critic_fn(p, others)), alpha));
    RngStream erng(77, "gan-test/fd-eps");
    Tn xhat = interpolate(real, fake, erng).set_requires_grad();
    Tn gx = grad(sum_all(critic_fn(p, xhat)), std::vector<Tn>{xhat},
                 /*create_graph=*/true)[0];
    Tn pen = mean_all(square(add_scalar(l2_norm_per_sample(gx), -1.0)));
    return add(loss, scale(pen, lambda));
  };
  double err = finite_diff_check<double>(f, params, 1e-4);
  INFO("rel err " << err);
  REQUIRE(err <= 1e-4);
}

TEST_CASE("zero generator iterations keep the generator at initialization") {
  auto data = random_patches(10, 17);
  GanTrainConfig cfg;
  cfg.iterations = 0;
  cfg.batch = 4;
  cfg.seed = 3;
  auto result = train_untargeted<float>(data, cfg);
  auto fresh = build_generator<float>(cfg.latent_dim, cfg.seed);
  REQUIRE(result.gen.fc_w.vals() == fresh.fc_w.vals());
  REQUIRE(result.trace.empty());
}

TEST_CASE("short training runs are finite and seed-deterministic") {
  auto data = random_patches(12, 19);
  GanTrainConfig cfg;
  cfg.iterations = 2;
  cfg.critic_iters = 2;
  cfg.batch = 4;
  cfg.seed = 11;
  auto r1 = train_untargeted<float>(data, cfg);
  auto r2 = train_untargeted<float>(data, cfg);
  REQUIRE(r1.trace.size() == 2);
  for (size_t i = 0; i < r1.trace.size(); ++i) {
    REQUIRE(std::isfinite(r1.trace[i].critic_loss));
    REQUIRE(r1.trace[i].critic_loss == r2.trace[i].critic_loss);
    REQUIRE(r1.trace[i].generator_loss == r2.trace[i].generator_loss);
    REQUIRE(r1.trace[i].grad_norm_mean == r2.trace[i].grad_norm_mean);
  }
  REQUIRE(r1.gen.fc_w.vals() == r2.gen.fc_w.vals());
}

TEST_CASE("targeted training with alpha zero reduces to plain training") {
  auto target = random_patches(8, 23);
  auto others = random_patches(8, 29);
  GanTrainConfig cfg;
  cfg.iterations = 2;
  cfg.critic_iters = 2;
  cfg.batch = 4;
  cfg.seed = 7;
  cfg.sigma_rel = 0.0;

  CriticLossConfig plain;
  auto rp = train_targeted<float>(target, others, cfg, plain);

  CriticLossConfig mixed;
  mixed.mode = CriticLossConfig::Mode::kMixed;
  mixed.alpha = 0.0;
  auto rm = train_targeted<float>(target, others, cfg, mixed);

  for (size_t i = 0; i < rp.trace.size(); ++i) {
    REQUIRE(rp.trace[i].critic_loss == rm.trace[i].critic_loss);
    REQUIRE(rp.trace[i].generator_loss == rm.trace[i].generator_loss);
  }
  REQUIRE(rp.gen.fc_w.vals() == rm.gen.fc_w.vals());
}

TEST_CASE("target noise changes the real batches") {
  auto target = random_patches(8, 31);
  auto others = random_patches(8, 37);
  GanTrainConfig cfg;
  cfg.iterations = 1;
  cfg.critic_iters = 1;
  cfg.batch = 4;
  cfg.seed = 13;
  CriticLossConfig mixed;
  mixed.mode = CriticLossConfig::Mode::kMixed;
  mixed.alpha = 1.0;

  cfg.sigma_rel = 0.0;
  auto quiet = train_targeted<float>(target, others, cfg, mixed);
  cfg.sigma_rel = 0.05;
  auto noisy = train_targeted<float>(target, others, cfg, mixed);
  REQUIRE(quiet.trace[0].critic_loss != noisy.trace[0].critic_loss);
}

TEST_CASE("sampling is shaped, clamped, and deterministic") {
  auto g = build_generator<float>(128, 3);
  REQUIRE(sample_patches(g, 0, 1).empty());
  auto s1 = sample_patches(g, 5, 42);
  auto s2 = sample_patches(g, 5, 42);
  REQUIRE(s1.size() == 5);
  for (size_t i = 0; i < 5; ++i) {
    REQUIRE(s1[i].values.size() == 64 * 64);
    for (float v : s1[i].values) REQUIRE(v >= 0.0f);
    REQUIRE(s1[i].values == s2[i].values);
  }
  auto s3 = sample_patches(g, 5, 43);
  REQUIRE(s1[0].values != s3[0].values);
}

TEST_CASE("generator and critic checkpoints round-trip") {
  auto g = build_generator<float>(64, 9);
  save_generator("gan_test_gen.spfb", g);
  auto g2 = load_generator<float>("gan_test_gen.spfb");
  REQUIRE(g2.latent_dim == 64);
  REQUIRE(g2.fc_w.vals() == g.fc_w.vals());
  REQUIRE(g2.bn2.running_var.vals() == g.bn2.running_var.vals());

  auto c = build_critic<float>(9);
  save_critic("gan_test_critic.spfb", c);
  auto c2 = load_critic<float>("gan_test_critic.spfb");
  REQUIRE(c2.c3_w.vals() == c.c3_w.vals());
  std::remove("gan_test_gen.spfb");
  std::remove("gan_test_critic.spfb");
}
