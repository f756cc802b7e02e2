// spoofbench/attack.hpp
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

#ifndef SPOOFBENCH_ATTACK_HPP_
#define SPOOFBENCH_ATTACK_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spoofbench/csv.hpp"
#include "spoofbench/gan.hpp"
#include "spoofbench/recognizer.hpp"

// Attack evaluation: generated samples are attributed to a speaker with a
// KNN classifier over the recognizer's 1024-dim deep features (that gives
// the pseudo ground truth of the untargeted protocol), then scored against
// the recognizer's own argmax predictions.

namespace spoofbench {

// Exact (brute-force) 5-nearest-neighbor index over Euclidean distance.
struct DeepFeatureIndex {
  static constexpr int kK = 5;
  std::vector<std::vector<float>> features;  // each kDeepFeatureDim long
  std::vector<int> labels;                   // class index per vector
};

inline DeepFeatureIndex build_index(std::vector<std::vector<float>> features,
                                    std::vector<int> labels) {
  require(features.size() == labels.size(),
          "knn: feature/label count mismatch");
  require(static_cast<int>(features.size()) >= DeepFeatureIndex::kK,
          "knn: need at least " + std::to_string(DeepFeatureIndex::kK) +
              " vectors, got " + std::to_string(features.size()));
  for (const auto& f : features)
    require(f.size() == kDeepFeatureDim,
            "knn: features must be " + std::to_string(kDeepFeatureDim) +
                "-dimensional");
  DeepFeatureIndex idx;
  idx.features = std::move(features);
  idx.labels = std::move(labels);
  return idx;
}

// Majority label among the 5 Euclidean nearest neighbors.  Vote ties go to
// the tied label that appears nearest in the neighbor list (equal distances
// break by storage order, which keeps results deterministic).
inline int knn_predict(const DeepFeatureIndex& idx,
                       const std::vector<float>& query) {
  require(query.size() == kDeepFeatureDim, "knn: bad query dimension");
  const size_t n = idx.features.size();
  std::vector<std::pair<double, int>> dist(n);
  for (size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const auto& f = idx.features[i];
    for (size_t j = 0; j < f.size(); ++j) {
      const double d = static_cast<double>(f[j]) - query[j];
      acc += d * d;
    }
    dist[i] = {acc, static_cast<int>(i)};
  }
  std::partial_sort(dist.begin(), dist.begin() + DeepFeatureIndex::kK,
                    dist.end());

  std::map<int, int> votes;
  for (int k = 0; k < DeepFeatureIndex::kK; ++k)
    votes[idx.labels[static_cast<size_t>(dist[static_cast<size_t>(k)].second)]]++;
  int best = 0;
  for (const auto& [label, count] : votes) best = std::max(best, count);
  for (int k = 0; k < DeepFeatureIndex::kK; ++k) {
    const int label =
        idx.labels[static_cast<size_t>(dist[static_cast<size_t>(k)].second)];
    if (votes[label] == best) return label;
  }
  return idx.labels[static_cast<size_t>(dist[0].second)];
}

struct AttackReport {
  std::vector<std::string> labels;  // class index -> name
  std::vector<int64_t> confusion;   // rows pseudo-label/truth, cols prediction
  std::vector<int64_t> histogram;   // recognizer predictions per class
  double error_rate = 0.0;          // targeted: fraction not hitting target
  double diagonal_mass = 0.0;       // untargeted: trace / n
  int n = 0;
  int target = -1;                  // class index, -1 for untargeted
  uint64_t seed = 0;
};

namespace detail {

template <typename T>
std::vector<std::vector<float>> feature_rows(const Tensor<T>& feats) {
  std::vector<std::vector<float>> out(static_cast<size_t>(feats.dim(0)));
  for (int i = 0; i < feats.dim(0); ++i) {
    out[static_cast<size_t>(i)].resize(kDeepFeatureDim);
    for (int j = 0; j < kDeepFeatureDim; ++j)
      out[static_cast<size_t>(i)][static_cast<size_t>(j)] = static_cast<float>(
          feats.vals()[static_cast<size_t>(i) * kDeepFeatureDim + j]);
  }
  return out;
}

}  // namespace detail

// Deep-feature index over a labeled patch set (typically all real speaker
// patches, the rejection class excluded).
template <typename T>
DeepFeatureIndex build_index_from_patches(const CnnModel<T>& rec,
                                          const PatchDataset& ds,
                                          const std::vector<int>& which) {
  std::vector<std::vector<float>> feats;
  std::vector<int> labels;
  const int chunk = 64;
  for (size_t off = 0; off < which.size(); off += chunk) {
    std::vector<int> part(which.begin() + static_cast<long>(off),
                          which.begin() + static_cast<long>(
                              std::min(off + chunk, which.size())));
    Tensor<T> f = deep_features(rec, patch_batch<T>(ds.patches, part));
    auto rows = detail::feature_rows(f);
    for (size_t i = 0; i < part.size(); ++i) {
      feats.push_back(std::move(rows[i]));
      labels.push_back(
          static_cast<int>(ds.patches[static_cast<size_t>(part[i])].label));
    }
  }
  return build_index(std::move(feats), std::move(labels));
}

// Untargeted protocol: each generated patch gets a KNN pseudo-label in deep
// feature space and a recognizer prediction; the report carries the
// (pseudo-label x prediction) confusion matrix and its diagonal mass.
template <typename T>
AttackReport untargeted_eval(GeneratorModel<T>& gen, const CnnModel<T>& rec,
                             const DeepFeatureIndex& idx, int n,
                             uint64_t seed) {
  const int classes = rec.n_classes();
  AttackReport rep;
  rep.labels = rec.labels;
  rep.confusion.assign(static_cast<size_t>(classes) * classes, 0);
  rep.histogram.assign(static_cast<size_t>(classes), 0);
  rep.n = n;
  rep.seed = seed;

  std::vector<MelPatch> samples = sample_patches(gen, n, seed);
  const int chunk = 64;
  int64_t diag = 0;
  for (int off = 0; off < n; off += chunk) {
    std::vector<int> part;
    for (int i = off; i < std::min(off + chunk, n); ++i) part.push_back(i);
    Tensor<T> x = patch_batch<T>(samples, part);
    Tensor<T> feats = deep_features(rec, x);
    auto rows = detail::feature_rows(feats);
    std::vector<int> preds = argmax_rows(cnn_predict_proba(rec, x));
    for (size_t i = 0; i < part.size(); ++i) {
      const int pseudo = knn_predict(idx, rows[i]);
      const int pred = preds[i];
      rep.confusion[static_cast<size_t>(pseudo) * classes + pred] += 1;
      rep.histogram[static_cast<size_t>(pred)] += 1;
      if (pseudo == pred) ++diag;
    }
  }
  rep.diagonal_mass = n > 0 ? static_cast<double>(diag) / n : 0.0;
  return rep;
}

// Targeted protocol: error rate is the fraction of generated samples whose
// recognizer argmax is not the target class.
template <typename T>
AttackReport targeted_eval(GeneratorModel<T>& gen, const CnnModel<T>& rec,
                           int target, int n, uint64_t seed) {
  const int classes = rec.n_classes();
  require(target >= 0 && target < classes,
          "targeted_eval: target class out of range");
  AttackReport rep;
  rep.labels = rec.labels;
  rep.confusion.assign(static_cast<size_t>(classes) * classes, 0);
  rep.histogram.assign(static_cast<size_t>(classes), 0);
  rep.n = n;
  rep.seed = seed;
  rep.target = target;

  std::vector<MelPatch> samples = sample_patches(gen, n, seed);
  const int chunk = 64;
  int64_t hits = 0;
  for (int off = 0; off < n; off += chunk) {
    std::vector<int> part;
    for (int i = off; i < std::min(off + chunk, n); ++i) part.push_back(i);
    std::vector<int> preds =
        argmax_rows(cnn_predict_proba(rec, patch_batch<T>(samples, part)));
    for (int pred : preds) {
      rep.histogram[static_cast<size_t>(pred)] += 1;
      rep.confusion[static_cast<size_t>(target) * classes + pred] += 1;
      if (pred == target) ++hits;
    }
  }
  rep.error_rate = n > 0 ? 1.0 - static_cast<double>(hits) / n : 0.0;
  return rep;
}

// Summary + histogram CSV; the confusion matrix goes to its own file via
// write_confusion_csv.
inline void write_attack_report_csv(const std::string& path,
                                    const AttackReport& rep) {
  CsvWriter csv(path);
  csv.field(std::string("key")).field(std::string("value"));
  csv.endrow();
  csv.field(std::string("seed")).field(rep.seed);
  csv.endrow();
  csv.field(std::string("n")).field(static_cast<int64_t>(rep.n));
  csv.endrow();
  if (rep.target >= 0) {
    csv.field(std::string("target"))
        .field(rep.labels[static_cast<size_t>(rep.target)]);
    csv.endrow();
    csv.field(std::string("error_rate")).field(rep.error_rate);
    csv.endrow();
  } else {
    csv.field(std::string("diagonal_mass")).field(rep.diagonal_mass);
    csv.endrow();
  }
  csv.field(std::string("histogram")).field(std::string(""));
  csv.endrow();
  for (size_t i = 0; i < rep.histogram.size(); ++i) {
    csv.field(rep.labels[i]).field(rep.histogram[i]);
    csv.endrow();
  }
  csv.close();
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_ATTACK_HPP_
