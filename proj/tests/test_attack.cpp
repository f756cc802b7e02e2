#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "spoofbench/attack.hpp"

using namespace spoofbench;
using Catch::Approx;

namespace {

std::vector<float> random_feature(RngStream& rng) {
  std::vector<float> f(kDeepFeatureDim);
  for (auto& v : f) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return f;
}

}  // namespace

TEST_CASE("index construction boundaries") {
  RngStream rng(1, "attack-test/idx");
  std::vector<std::vector<float>> feats;
  std::vector<int> labels;
  for (int i = 0; i < 5; ++i) {
    feats.push_back(random_feature(rng));
    labels.push_back(i % 2);
  }
  REQUIRE_NOTHROW(build_index(feats, labels));

  feats.pop_back();
  labels.pop_back();
  REQUIRE_THROWS_AS(build_index(feats, labels), Error);

  // duplicates are fine
  feats.push_back(feats[0]);
  labels.push_back(labels[0]);
  REQUIRE_NOTHROW(build_index(feats, labels));
}

TEST_CASE("an exact stored vector surrounded by its own label wins") {
  RngStream rng(2, "attack-test/self");
  std::vector<std::vector<float>> feats;
  std::vector<int> labels;
  auto anchor = random_feature(rng);
  for (int i = 0; i < 5; ++i) {
    auto f = anchor;
    f[0] += 0.001f * i;
    feats.push_back(f);
    labels.push_back(7);
  }
  for (int i = 0; i < 10; ++i) {
    auto f = random_feature(rng);
    f[0] += 50.0f;
    feats.push_back(f);
    labels.push_back(1);
  }
  auto idx = build_index(feats, labels);
  REQUIRE(knn_predict(idx, anchor) == 7);
}

TEST_CASE("three against two is a majority") {
  std::vector<std::vector<float>> feats;
  std::vector<int> labels;
  for (int i = 0; i < 3; ++i) {
    std::vector<float> f(kDeepFeatureDim, 0.0f);
    f[0] = 1.0f + 0.01f * i;
    feats.push_back(f);
    labels.push_back(0);  // label A, slightly farther
  }
  for (int i = 0; i < 2; ++i) {
    std::vector<float> f(kDeepFeatureDim, 0.0f);
    f[0] = 0.5f + 0.01f * i;
    feats.push_back(f);
    labels.push_back(1);  // label B, nearer but outvoted
  }
  auto idx = build_index(feats, labels);
  std::vector<float> q(kDeepFeatureDim, 0.0f);
  q[0] = 0.75f;
  REQUIRE(knn_predict(idx, q) == 0);
}

TEST_CASE("knn matches the exhaustive oracle on random instances") {
  int agreements = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    RngStream rng(1000 + t, "attack-test/oracle");
    std::vector<std::vector<float>> feats;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
      feats.push_back(random_feature(rng));
      labels.push_back(static_cast<int>(rng.index(4)));
    }
    auto idx = build_index(feats, labels);
    auto q = random_feature(rng);
    if (knn_predict(idx, q) == oracles::brute_knn(feats, labels, q, 5))
      ++agreements;
  }
  REQUIRE(agreements == trials);
}

TEST_CASE("targeted evaluation on a constant predictor") {
  auto rec = build_cnn<float>(4, 3);
  rec.labels = {"spk00", "spk01", "spk02", "other"};
  rec.other_index = 3;
  rec.fc2_b.mutable_vals()[1] = 100.0f;  // always predicts class 1
  auto gen = build_generator<float>(32, 5);

  AttackReport hit = targeted_eval(gen, rec, /*target=*/1, 40, 9);
  REQUIRE(hit.error_rate == 0.0);
  AttackReport miss = targeted_eval(gen, rec, /*target=*/0, 40, 9);
  REQUIRE(miss.error_rate == 1.0);

  int64_t total = 0;
  for (int64_t v : hit.histogram) total += v;
  REQUIRE(total == 40);
  // error rate plus accuracy-to-target is exactly one
  REQUIRE(miss.error_rate +
              static_cast<double>(miss.histogram[0]) / miss.n ==
          1.0);
}

TEST_CASE("untargeted evaluation books totals and is deterministic") {
  auto rec = build_cnn<float>(3, 7);
  rec.labels = {"spk00", "spk01", "other"};
  rec.other_index = 2;
  auto gen = build_generator<float>(32, 11);

  RngStream rng(13, "attack-test/feats");
  std::vector<std::vector<float>> feats;
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) {
    feats.push_back(random_feature(rng));
    labels.push_back(i % 2);
  }
  auto idx = build_index(feats, labels);

  AttackReport r1 = untargeted_eval(gen, rec, idx, 30, 21);
  AttackReport r2 = untargeted_eval(gen, rec, idx, 30, 21);
  int64_t total = 0;
  for (int64_t v : r1.confusion) total += v;
  REQUIRE(total == 30);
  REQUIRE(r1.confusion == r2.confusion);
  REQUIRE(r1.diagonal_mass == r2.diagonal_mass);
  int64_t hist_total = 0;
  for (int64_t v : r1.histogram) hist_total += v;
  REQUIRE(hist_total == 30);
}

TEST_CASE("report CSVs carry the header block and histogram") {
  AttackReport rep;
  rep.labels = {"spk00", "spk01"};
  rep.confusion = {5, 1, 2, 4};
  rep.histogram = {7, 5};
  rep.n = 12;
  rep.seed = 77;
  rep.target = 0;
  rep.error_rate = 0.25;
  write_attack_report_csv("attack_test_report.csv", rep);
  write_confusion_csv("attack_test_confusion.csv", rep.labels, rep.confusion);

  std::ifstream is("attack_test_report.csv");
  std::string all((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  REQUIRE(all.find("key,value") != std::string::npos);
  REQUIRE(all.find("seed,77") != std::string::npos);
  REQUIRE(all.find("error_rate,0.25") != std::string::npos);
  REQUIRE(all.find("spk01,5") != std::string::npos);

  std::ifstream ic("attack_test_confusion.csv");
  std::string line;
  std::getline(ic, line);
  REQUIRE(line == "truth\\pred,spk00,spk01");
  std::getline(ic, line);
  REQUIRE(line == "spk00,5,1");
  std::remove("attack_test_report.csv");
  std::remove("attack_test_confusion.csv");
}
