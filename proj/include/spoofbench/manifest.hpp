// spoofbench/manifest.hpp
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

#ifndef SPOOFBENCH_MANIFEST_HPP_
#define SPOOFBENCH_MANIFEST_HPP_

#include <fstream>
#include <string>

#include <json.hpp>

#include "spoofbench/tensor.hpp"  // require

namespace spoofbench {

constexpr const char* kToolkitVersion = "0.1.0";

// Every artifact-producing command drops a manifest next to its outputs:
// the subcommand, all resolved configuration values, seeds, and paths.
// Deliberately no timestamps or host data, so a rerun with identical flags
// reproduces the file byte for byte.
class RunManifest {
 public:
  explicit RunManifest(const std::string& command) {
    j_["tool"] = "spoofbench";
    j_["version"] = kToolkitVersion;
    j_["command"] = command;
    j_["config"] = nlohmann::json::object();
    j_["inputs"] = nlohmann::json::array();
    j_["outputs"] = nlohmann::json::array();
  }

  template <typename T>
  void set(const std::string& key, const T& value) {
    j_["config"][key] = value;
  }
  void add_input(const std::string& path) { j_["inputs"].push_back(path); }
  void add_output(const std::string& path) { j_["outputs"].push_back(path); }

  void write(const std::string& path) const {
    std::ofstream os(path);
    require(os.is_open(), "manifest: cannot open " + path + " for writing");
    os << j_.dump(2) << "\n";
    require(static_cast<bool>(os), "manifest: write failed for " + path);
  }

  const nlohmann::json& json() const { return j_; }

 private:
  nlohmann::json j_;
};

}  // namespace spoofbench

#endif  // SPOOFBENCH_MANIFEST_HPP_
