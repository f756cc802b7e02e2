// Central-difference oracles for the differentiation engine, run in wide
// (double) precision.  Every registered op is checked against numeric
// gradients on several random inputs; the double-backprop path is checked
// both against a hand-derived formula and against central differences of the
// penalty itself.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "spoofbench/rng.hpp"
#include "spoofbench/tensor.hpp"

using namespace spoofbench;
using Catch::Approx;

namespace {

using D = double;
using Tn = Tensor<double>;

Tn rand_t(const Shape& shape, RngStream& rng, double lo = -1.0,
          double hi = 1.0) {
  std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
  rng.fill_uniform(data, lo, hi);
  return Tn::from_data(shape, std::move(data));
}

// Reduces an arbitrary tensor to a scalar with fixed random weights so the
// upstream gradient of the op under test is non-uniform.
Tn weigh(const Tn& y, RngStream& rng) {
  std::vector<double> w(static_cast<size_t>(y.size()));
  rng.fill_uniform(w, -1.0, 1.0);
  return sum_all(mul(y, Tn::from_data(y.shape(), std::move(w))));
}

struct OpCase {
  std::string name;
  std::function<std::vector<Tn>(RngStream&)> make_inputs;
  std::function<Tn(const std::vector<Tn>&, RngStream&)> f;
};

const double kStep = 1e-4;
const double kPerOpTol = 1e-6;

void run_case(const OpCase& c, int runs = 10) {
  for (int r = 0; r < runs; ++r) {
    RngStream rng(1000 + r, "gradcheck/" + c.name);
    auto inputs = c.make_inputs(rng);
    RngStream wrng(2000 + r, "gradcheck/weights/" + c.name);
    double err = finite_diff_check<double>(
        [&](const std::vector<Tn>& in) {
          RngStream w2(2000 + r, "gradcheck/weights/" + c.name);
          return c.f(in, w2);
        },
        inputs, kStep);
    INFO(c.name << " run " << r << " rel err " << err);
    REQUIRE(err <= kPerOpTol);
  }
}

}  // namespace

TEST_CASE("per-op gradients match central differences") {
  std::vector<OpCase> cases;

  auto ew_pair = [](RngStream& rng) {
    return std::vector<Tn>{rand_t({3, 4}, rng), rand_t({3, 4}, rng)};
  };
  auto ew_one = [](RngStream& rng) {
    return std::vector<Tn>{rand_t({3, 4}, rng)};
  };
  auto ew_pos = [](RngStream& rng) {
    return std::vector<Tn>{rand_t({3, 4}, rng, 0.5, 2.0)};
  };

  cases.push_back({"add", ew_pair,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(add(in[0], in[1]), w);
                   }});
  cases.push_back({"sub", ew_pair,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(sub(in[0], in[1]), w);
                   }});
  cases.push_back({"mul", ew_pair,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(mul(in[0], in[1]), w);
                   }});
  cases.push_back({"div",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({3, 4}, rng),
                                            rand_t({3, 4}, rng, 0.5, 2.0)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(divide(in[0], in[1]), w);
                   }});
  cases.push_back({"neg", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(neg(in[0]), w);
                   }});
  cases.push_back({"scale", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(scale(in[0], 1.7), w);
                   }});
  cases.push_back({"add_scalar", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(add_scalar(in[0], 0.3), w);
                   }});
  cases.push_back({"pow", ew_pos,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(pow_(in[0], -0.5), w);
                   }});
  cases.push_back({"matmul",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({3, 4}, rng),
                                            rand_t({4, 5}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(matmul(in[0], in[1]), w);
                   }});
  cases.push_back({"transpose", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(transpose(in[0]), w);
                   }});
  cases.push_back({"relu", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(relu(in[0]), w);
                   }});
  cases.push_back({"leaky_relu", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(leaky_relu(in[0], 0.2), w);
                   }});
  cases.push_back({"tanh", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(tanh_(in[0]), w);
                   }});
  cases.push_back({"sigmoid", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(sigmoid(in[0]), w);
                   }});
  cases.push_back({"exp", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(exp_(in[0]), w);
                   }});
  cases.push_back({"log", ew_pos,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(log_(in[0]), w);
                   }});
  cases.push_back({"sqrt", ew_pos,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(sqrt_(in[0]), w);
                   }});
  cases.push_back({"softmax_rows", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(softmax_rows(in[0]), w);
                   }});
  cases.push_back({"log_softmax_rows", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(log_softmax_rows(in[0]), w);
                   }});
  cases.push_back({"row_sum", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(row_sum(in[0]), w);
                   }});
  cases.push_back({"col_sum", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(col_sum(in[0]), w);
                   }});
  cases.push_back({"rep_rows",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({4}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(rep_rows(in[0], 3), w);
                   }});
  cases.push_back({"rep_cols",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({4}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(rep_cols(in[0], 3), w);
                   }});
  cases.push_back({"sum_all", ew_one,
                   [](const std::vector<Tn>& in, RngStream&) {
                     return sum_all(in[0]);
                   }});
  cases.push_back({"mean_all", ew_one,
                   [](const std::vector<Tn>& in, RngStream&) {
                     return mean_all(in[0]);
                   }});
  cases.push_back({"broadcast_scalar",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(broadcast_scalar(in[0], {2, 3}), w);
                   }});
  cases.push_back({"channel_mean",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({2, 3, 4, 4}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(channel_mean(in[0]), w);
                   }});
  cases.push_back({"broadcast_channels",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({3}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(broadcast_channels(in[0], 2, 4, 4), w);
                   }});
  cases.push_back({"pick_rows",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({4, 5}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(pick_rows(in[0], {1, 0, 4, 2}), w);
                   }});
  cases.push_back({"scatter_rows",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({4}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(scatter_rows(in[0], {1, 0, 4, 2}, 5), w);
                   }});
  cases.push_back({"reshape", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(reshape(in[0], {2, 6}), w);
                   }});
  cases.push_back({"concat_rows", ew_pair,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(concat_rows(in[0], in[1]), w);
                   }});
  cases.push_back({"slice_rows", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(slice_rows(in[0], 1, 3), w);
                   }});
  cases.push_back({"pad_rows", ew_one,
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(pad_rows(in[0], 2, 7), w);
                   }});
  cases.push_back({"conv2d_s1p1",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({2, 2, 5, 5}, rng),
                                            rand_t({3, 2, 3, 3}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(conv2d(in[0], in[1], 1, 1), w);
                   }});
  cases.push_back({"conv2d_s2p1k4",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({2, 2, 8, 8}, rng),
                                            rand_t({3, 2, 4, 4}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(conv2d(in[0], in[1], 2, 1), w);
                   }});
  cases.push_back({"conv2d_bias",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({2, 2, 8, 8}, rng),
                                            rand_t({3, 2, 4, 4}, rng),
                                            rand_t({3}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(conv2d_bias(in[0], in[1], in[2], 2, 1), w);
                   }});
  cases.push_back({"conv2d_input_grad",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({2, 3, 4, 4}, rng),
                                            rand_t({3, 2, 4, 4}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(conv2d_input_grad(in[0], in[1], 2, 1, 8, 8),
                                  w);
                   }});
  cases.push_back({"conv2d_weight_grad",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({2, 2, 8, 8}, rng),
                                            rand_t({2, 3, 4, 4}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(
                         conv2d_weight_grad(in[0], in[1], 2, 1, 4, 4), w);
                   }});
  cases.push_back({"conv2d_transpose",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({2, 4, 4, 4}, rng),
                                            rand_t({4, 2, 4, 4}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(conv2d_transpose(in[0], in[1], 2, 1), w);
                   }});
  cases.push_back({"maxpool2x2",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({2, 2, 4, 4}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(maxpool2x2(in[0]), w);
                   }});
  cases.push_back({"dense",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({3, 4}, rng),
                                            rand_t({4, 5}, rng),
                                            rand_t({5}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(dense(in[0], in[1], in[2]), w);
                   }});
  cases.push_back({"batch_norm",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({3, 2, 4, 4}, rng),
                                            rand_t({2}, rng, 0.5, 1.5),
                                            rand_t({2}, rng)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(
                         batch_norm_train<double>(in[0], in[1], in[2], nullptr),
                         w);
                   }});
  cases.push_back({"l2_norm_per_sample",
                   [](RngStream& rng) {
                     return std::vector<Tn>{rand_t({3, 6}, rng, 0.2, 1.0)};
                   },
                   [](const std::vector<Tn>& in, RngStream& w) {
                     return weigh(l2_norm_per_sample(in[0]), w);
                   }});

  for (const auto& c : cases) {
    DYNAMIC_SECTION(c.name) { run_case(c); }
  }
}

TEST_CASE("grad of x*x at 3 is 6") {
  auto x = Tn::scalar(3.0).set_requires_grad();
  auto y = mul(x, x);
  auto g = grad(y, {x});
  REQUIRE(g[0].item() == Approx(6.0).margin(1e-12));
}

TEST_CASE("grad of a constant with respect to a leaf is zero") {
  auto x = Tn::scalar(2.0).set_requires_grad();
  auto c = Tn::scalar(5.0);
  auto g = grad(c, {x});
  REQUIRE(g[0].item() == 0.0);
}

TEST_CASE("grad rejects non-scalar outputs and unrecorded tensors") {
  auto x = Tn::from_data({2}, {1.0, 2.0}).set_requires_grad();
  auto y = mul(x, x);
  REQUIRE_THROWS_AS(grad(y, {x}), Error);

  auto z = Tn::scalar(1.0);  // never marked requires_grad
  auto s = sum_all(x);
  REQUIRE_THROWS_AS(grad(s, {z}), Error);
}

namespace {

// Gradient-penalty value for a 1-D critic D(x) = x*x, built exactly the way
// the training loss builds it: inner grad with create_graph, per-sample
// L2 norm, squared distance from 1.
Tn penalty_1d(const Tn& x) {
  Tn score = sum_all(mul(x, x));
  Tn gx = grad(score, std::vector<Tn>{x}, /*create_graph=*/true)[0];
  Tn nrm = l2_norm_per_sample(reshape(gx, {1, 1}));
  return sum_all(square(add_scalar(nrm, -1.0)));
}

}  // namespace

TEST_CASE("double backprop matches the hand-derived penalty derivative") {
  // D(x) = x^2, p = (|2x| - 1)^2, dp/dx = 4(2|x| - 1) sign(x)
  for (double xv : {0.25, 1.0, -2.0}) {
    auto x = Tn::from_data({1}, {xv}).set_requires_grad();
    auto p = penalty_1d(x);
    auto dp = grad(p, std::vector<Tn>{x});
    const double expected = 4.0 * (2.0 * std::abs(xv) - 1.0) *
                            (xv > 0 ? 1.0 : -1.0);
    REQUIRE(dp[0].vals()[0] == Approx(expected).margin(1e-6));
  }
}

TEST_CASE("double backprop matches central differences of the penalty") {
  for (int r = 0; r < 5; ++r) {
    RngStream rng(300 + r, "gradcheck/penalty");
    // Small leaky-ReLU critic over 4 samples of 6 features.
    auto x = rand_t({4, 6}, rng);
    auto w1 = rand_t({6, 8}, rng, -0.5, 0.5);
    auto b1 = rand_t({8}, rng, -0.1, 0.1);
    auto w2 = rand_t({8, 1}, rng, -0.5, 0.5);
    auto b2 = rand_t({1}, rng, -0.1, 0.1);
    auto f = [](const std::vector<Tn>& in) {
      const Tn& x = in[0];
      Tn h = leaky_relu(dense(x, in[1], in[2]), 0.2);
      Tn score = dense(h, in[3], in[4]);
      Tn gx = grad(sum_all(score), std::vector<Tn>{x},
                   /*create_graph=*/true)[0];
      Tn nrm = l2_norm_per_sample(gx);
      return mean_all(square(add_scalar(nrm, -1.0)));
    };
    double err = finite_diff_check<double>(
        f, std::vector<Tn>{x, w1, b1, w2, b2}, kStep);
    INFO("penalty run " << r << " rel err " << err);
    REQUIRE(err <= 1e-4);
  }
}

TEST_CASE("backward of a batch sum equals the sum of per-sample backwards") {
  RngStream rng(77, "gradcheck/linearity");
  auto w = rand_t({5, 1}, rng).set_requires_grad();
  auto batch = rand_t({6, 5}, rng);

  auto full = grad(sum_all(matmul(batch, w)), std::vector<Tn>{w})[0];

  std::vector<double> acc(5, 0.0);
  for (int i = 0; i < 6; ++i) {
    auto row = slice_rows(batch, i, i + 1);
    auto gi = grad(sum_all(matmul(row, w)), std::vector<Tn>{w})[0];
    for (int j = 0; j < 5; ++j) acc[static_cast<size_t>(j)] += gi.vals()[j];
  }
  for (int j = 0; j < 5; ++j)
    REQUIRE(full.vals()[j] == Approx(acc[static_cast<size_t>(j)]).margin(1e-12));
}

TEST_CASE("graph replay with identical seeds is bit-identical") {
  auto run = [] {
    RngStream rng(9, "gradcheck/replay");
    auto x = rand_t({4, 3}, rng);
    auto w = rand_t({3, 2}, rng).set_requires_grad();
    auto b = rand_t({2}, rng).set_requires_grad();
    auto loss = mean_all(square(tanh_(dense(x, w, b))));
    auto gs = grad(loss, std::vector<Tn>{w, b});
    std::vector<double> flat = gs[0].vals();
    flat.insert(flat.end(), gs[1].vals().begin(), gs[1].vals().end());
    flat.push_back(loss.item());
    return flat;
  };
  REQUIRE(run() == run());
}

TEST_CASE("finite_diff_check on simple closed forms") {
  RngStream rng(55, "gradcheck/closed");
  auto x = rand_t({3, 3}, rng);
  double err = finite_diff_check<double>(
      [](const std::vector<Tn>& in) { return sum_all(square(in[0])); },
      std::vector<Tn>{x}, kStep);
  REQUIRE(err <= 1e-6);

  auto y = rand_t({4}, rng);
  double cerr = finite_diff_check<double>(
      [](const std::vector<Tn>& in) {
        return sum_all(mul(in[0], Tn::zeros(in[0].shape())));
      },
      std::vector<Tn>{y}, kStep);
  REQUIRE(cerr <= 1e-6);  // constant function: both gradients are zero
}
