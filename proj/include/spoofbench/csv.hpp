// spoofbench/csv.hpp
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

#ifndef SPOOFBENCH_CSV_HPP_
#define SPOOFBENCH_CSV_HPP_

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "spoofbench/tensor.hpp"  // require

namespace spoofbench {

// Minimal CSV emitter.  Numbers are printed with %.17g so that identical
// runs produce byte-identical files.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : os_(path) {
    require(os_.is_open(), "csv: cannot open " + path + " for writing");
    path_ = path;
  }
  ~CsvWriter() = default;

  CsvWriter& field(const std::string& s) {
    sep();
    os_ << s;
    return *this;
  }
  CsvWriter& field(int64_t v) {
    sep();
    os_ << v;
    return *this;
  }
  CsvWriter& field(int v) { return field(static_cast<int64_t>(v)); }
  CsvWriter& field(uint64_t v) {
    sep();
    os_ << v;
    return *this;
  }
  CsvWriter& field(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    sep();
    os_ << buf;
    return *this;
  }
  void endrow() {
    os_ << "\n";
    col_ = 0;
  }
  void close() {
    os_.close();
    require(!os_.fail(), "csv: write failed for " + path_);
  }

 private:
  void sep() {
    if (col_++) os_ << ",";
  }
  std::ofstream os_;
  std::string path_;
  int col_ = 0;
};

// Square confusion matrix with a label header row and column.
inline void write_confusion_csv(const std::string& path,
                                const std::vector<std::string>& labels,
                                const std::vector<int64_t>& matrix) {
  const size_t n = labels.size();
  require(matrix.size() == n * n, "confusion: matrix/label size mismatch");
  CsvWriter csv(path);
  csv.field(std::string("truth\\pred"));
  for (const auto& l : labels) csv.field(l);
  csv.endrow();
  for (size_t r = 0; r < n; ++r) {
    csv.field(labels[r]);
    for (size_t c = 0; c < n; ++c) csv.field(matrix[r * n + c]);
    csv.endrow();
  }
  csv.close();
}

}  // namespace spoofbench

#endif  // SPOOFBENCH_CSV_HPP_
