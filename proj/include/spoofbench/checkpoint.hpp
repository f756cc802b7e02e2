// spoofbench/checkpoint.hpp
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

#ifndef SPOOFBENCH_CHECKPOINT_HPP_
#define SPOOFBENCH_CHECKPOINT_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spoofbench/tensor.hpp"

// "SPFB" checkpoint container, shared by every module:
//   magic "SPFB", version u32, tensor count u32, then per tensor
//   { name length u32, UTF-8 name, rank u32, dims u32[rank],
//     little-endian f32 data }.
// All integers are little-endian.  Data is always stored as f32; wide-mode
// tensors are converted on save and load.

namespace spoofbench {

constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  require(static_cast<bool>(is), "checkpoint: truncated file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_f32_array(std::ostream& os, const float* data, size_t n) {
  static_assert(sizeof(float) == 4);
  // This toolkit targets little-endian hosts; the format is little-endian.
  os.write(reinterpret_cast<const char*>(data),
           static_cast<std::streamsize>(n * 4));
}

inline void read_f32_array(std::istream& is, float* data, size_t n) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4));
  require(static_cast<bool>(is), "checkpoint: truncated tensor data");
}

}  // namespace detail

struct NamedTensorF32 {
  Shape shape;
  std::vector<float> data;
};

using CheckpointMap = std::map<std::string, NamedTensorF32>;

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, NamedTensorF32>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  require(os.is_open(), "checkpoint: cannot open " + path + " for writing");
  os.write("SPFB", 4);
  detail::write_u32(os, kCheckpointVersion);
  detail::write_u32(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) detail::write_u32(os, static_cast<uint32_t>(d));
    detail::write_f32_array(os, t.data.data(), t.data.size());
  }
  require(static_cast<bool>(os), "checkpoint: write failed for " + path);
}

inline CheckpointMap load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.is_open(), "checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  require(static_cast<bool>(is) && std::memcmp(magic, "SPFB", 4) == 0,
          "checkpoint: " + path + " is not an SPFB file");
  const uint32_t version = detail::read_u32(is);
  require(version == kCheckpointVersion,
          "checkpoint: unsupported version " + std::to_string(version));
  const uint32_t count = detail::read_u32(is);
  CheckpointMap out;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = detail::read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    require(static_cast<bool>(is), "checkpoint: truncated tensor name");
    const uint32_t rank = detail::read_u32(is);
    NamedTensorF32 t;
    int64_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(static_cast<int>(detail::read_u32(is)));
      n *= t.shape.back();
    }
    t.data.resize(static_cast<size_t>(n));
    detail::read_f32_array(is, t.data.data(), t.data.size());
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

template <typename T>
NamedTensorF32 to_f32(const Tensor<T>& t) {
  NamedTensorF32 out;
  out.shape = t.shape();
  out.data.reserve(static_cast<size_t>(t.size()));
  for (T v : t.vals()) out.data.push_back(static_cast<float>(v));
  return out;
}

template <typename T>
Tensor<T> from_f32(const NamedTensorF32& t) {
  std::vector<T> data(t.data.begin(), t.data.end());
  return Tensor<T>::from_data(t.shape, std::move(data));
}

// Loads one named tensor into an existing parameter (shape-checked).
template <typename T>
void load_into(const CheckpointMap& cp, const std::string& name,
               Tensor<T>& param) {
  auto it = cp.find(name);
  require(it != cp.end(), "checkpoint: missing tensor '" + name + "'");
  require(it->second.shape == param.shape(),
          "checkpoint: tensor '" + name + "' has shape " +
              shape_str(it->second.shape) + ", expected " +
              shape_str(param.shape()));
  auto& pv = param.mutable_vals();
  for (size_t i = 0; i < pv.size(); ++i)
    pv[i] = static_cast<T>(it->second.data[i]);
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_CHECKPOINT_HPP_
