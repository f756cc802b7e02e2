// spoofbench/data.hpp
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

#ifndef SPOOFBENCH_DATA_HPP_
#define SPOOFBENCH_DATA_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "spoofbench/mel.hpp"
#include "spoofbench/rng.hpp"
#include "spoofbench/tensor.hpp"

namespace spoofbench {

// Labeled 64x64 patches with a class-name table.  Patch labels are indices
// into class_names; at most one entry is the reserved "other" class.
struct PatchDataset {
  std::vector<MelPatch> patches;
  std::vector<std::string> class_names;
  int other_index = -1;

  int n_classes() const { return static_cast<int>(class_names.size()); }

  std::vector<int> indices_of_class(int label) const {
    std::vector<int> out;
    for (size_t i = 0; i < patches.size(); ++i)
      if (static_cast<int>(patches[i].label) == label)
        out.push_back(static_cast<int>(i));
    return out;
  }
};

struct TrainTestSplit {
  std::vector<int> train;
  std::vector<int> test;
};

// Per-class (stratified) split so small classes keep presence on both sides.
inline TrainTestSplit stratified_split(const PatchDataset& ds,
                                       double train_frac, uint64_t seed) {
  require(train_frac > 0.0 && train_frac < 1.0,
          "split: train fraction must be in (0,1)");
  TrainTestSplit sp;
  for (int c = 0; c < ds.n_classes(); ++c) {
    std::vector<int> idx = ds.indices_of_class(c);
    require(!idx.empty(),
            "split: class '" + ds.class_names[static_cast<size_t>(c)] +
                "' has no patches");
    RngStream rng(seed, "split/class", static_cast<uint64_t>(c));
    rng.shuffle(idx);
    size_t n_train = static_cast<size_t>(train_frac * idx.size());
    n_train = std::min(std::max<size_t>(n_train, 1), idx.size() - 1);
    require(idx.size() >= 2,
            "split: class '" + ds.class_names[static_cast<size_t>(c)] +
                "' needs at least 2 patches for a train/test split");
    for (size_t i = 0; i < idx.size(); ++i)
      (i < n_train ? sp.train : sp.test).push_back(idx[i]);
  }
  return sp;
}

// Stacks the selected patches into a [B,1,64,64] batch tensor.
template <typename T>
Tensor<T> patch_batch(const std::vector<MelPatch>& patches,
                      const std::vector<int>& which) {
  require(!which.empty(), "patch_batch: empty selection");
  const int mels = patches[static_cast<size_t>(which[0])].n_mels;
  const int frames = patches[static_cast<size_t>(which[0])].n_frames;
  std::vector<T> data;
  data.reserve(which.size() * static_cast<size_t>(mels) * frames);
  for (int i : which) {
    const auto& p = patches[static_cast<size_t>(i)];
    require(p.n_mels == mels && p.n_frames == frames,
            "patch_batch: inconsistent patch shapes");
    for (float v : p.values) data.push_back(static_cast<T>(v));
  }
  return Tensor<T>::from_data({static_cast<int>(which.size()), 1, mels, frames},
                              std::move(data));
}

template <typename T>
std::vector<int> batch_labels(const std::vector<MelPatch>& patches,
                              const std::vector<int>& which) {
  std::vector<int> out;
  out.reserve(which.size());
  for (int i : which)
    out.push_back(static_cast<int>(patches[static_cast<size_t>(i)].label));
  return out;
}

// A feature directory holds one <class>.mels per class plus labels.csv
// mapping class index -> name ("other" is the rejection class).
inline PatchDataset load_feature_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  PatchDataset ds;
  const fs::path labels_path = fs::path(dir) / "labels.csv";
  require(fs::exists(labels_path),
          "features: " + labels_path.string() + " not found");
  std::ifstream is(labels_path);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos, "features: malformed labels.csv line");
    const int label = std::stoi(line.substr(0, comma));
    const std::string name = line.substr(comma + 1);
    if (static_cast<int>(ds.class_names.size()) <= label)
      ds.class_names.resize(static_cast<size_t>(label) + 1);
    ds.class_names[static_cast<size_t>(label)] = name;
    if (name == "other") ds.other_index = label;
  }
  require(!ds.class_names.empty(), "features: labels.csv is empty");

  for (size_t c = 0; c < ds.class_names.size(); ++c) {
    const fs::path mels =
        fs::path(dir) / (ds.class_names[c] + ".mels");
    require(fs::exists(mels), "features: missing " + mels.string());
    for (auto& p : read_mels(mels.string())) ds.patches.push_back(std::move(p));
  }
  return ds;
}

// Patches of one class / of every class except one (and except "other").
inline std::vector<MelPatch> patches_of_class(const PatchDataset& ds,
                                              int label) {
  std::vector<MelPatch> out;
  for (const auto& p : ds.patches)
    if (static_cast<int>(p.label) == label) out.push_back(p);
  return out;
}

inline std::vector<MelPatch> speaker_patches_excluding(const PatchDataset& ds,
                                                       int excluded_label) {
  std::vector<MelPatch> out;
  for (const auto& p : ds.patches) {
    const int l = static_cast<int>(p.label);
    if (l == excluded_label || l == ds.other_index) continue;
    out.push_back(p);
  }
  return out;
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_DATA_HPP_
