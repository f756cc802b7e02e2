#include <catch2/catch_amalgamated.hpp>

#include "spoofbench/adam.hpp"
#include "spoofbench/tensor.hpp"

using namespace spoofbench;
using Catch::Approx;

TEST_CASE("zero gradient leaves parameters unchanged") {
  std::vector<Tensor<double>> params{Tensor<double>::from_data({3}, {1, 2, 3})};
  std::vector<Tensor<double>> grads{Tensor<double>::zeros({3})};
  AdamState<double> st;
  st.init(params);
  adam_step(params, grads, st);
  REQUIRE(params[0].vals() == std::vector<double>{1, 2, 3});
}

TEST_CASE("first step with unit gradient moves by about the learning rate") {
  // m = 0.1, v = 0.001; after bias correction mhat = 1, vhat = 1,
  // so the update is lr / (1 + eps) == ~1e-3 downward.
  std::vector<Tensor<double>> params{Tensor<double>::scalar(0.5)};
  std::vector<Tensor<double>> grads{Tensor<double>::scalar(1.0)};
  AdamState<double> st;
  st.cfg = {1e-3, 0.9, 0.999, 1e-8};
  st.init(params);
  adam_step(params, grads, st);
  REQUIRE(params[0].item() == Approx(0.5 - 1e-3).margin(1e-9));
}

TEST_CASE("two identical steps advance the step count and keep moments positive") {
  std::vector<Tensor<double>> params{Tensor<double>::from_data({2}, {0.1, -0.2})};
  std::vector<Tensor<double>> grads{Tensor<double>::from_data({2}, {0.3, -0.7})};
  AdamState<double> st;
  st.init(params);
  adam_step(params, grads, st);
  adam_step(params, grads, st);
  REQUIRE(st.step == 2);
  for (double v : st.v[0]) REQUIRE(v > 0.0);
}

TEST_CASE("shape mismatch is rejected") {
  std::vector<Tensor<double>> params{Tensor<double>::zeros({3})};
  std::vector<Tensor<double>> grads{Tensor<double>::zeros({4})};
  AdamState<double> st;
  st.init(params);
  REQUIRE_THROWS_AS(adam_step(params, grads, st), Error);
}

TEST_CASE("adam minimizes a quadratic") {
  auto x = Tensor<double>::scalar(3.0).set_requires_grad();
  std::vector<Tensor<double>> params{x};
  AdamState<double> st;
  st.cfg.lr = 0.05;
  st.init(params);
  for (int i = 0; i < 500; ++i) {
    auto loss = mul(params[0], params[0]);
    auto gs = grad(loss, params);
    adam_step(params, gs, st);
  }
  REQUIRE(std::abs(params[0].item()) < 1e-2);
}
