// Copyright 2026 The w2vs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef W2VS_TESTS_UNIT_TEST_UTIL_H_
#define W2VS_TESTS_UNIT_TEST_UTIL_H_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "w2vs/numerics/rng.h"
#include "w2vs/numerics/tensor.h"

namespace w2vs::testing {

template <typename T = float>
num::BasicTensor<T> RandomTensor(num::Shape shape, num::CounterRng& rng,
                                 double lo = -1.0, double hi = 1.0) {
  num::BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.Uniform(lo, hi));
  return t;
}

/// Small integers stored as floats; sums and products stay exact.
inline num::Tensor RandomIntegerTensor(num::Shape shape, num::CounterRng& rng,
                                       int lo, int hi) {
  num::Tensor t(std::move(shape));
  for (auto& v : t.data()) {
    v = static_cast<float>(lo + static_cast<int>(rng.Below(
                                    static_cast<std::uint64_t>(hi - lo + 1))));
  }
  return t;
}

inline std::string ReadFileBytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("w2vs_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace w2vs::testing

#endif  // W2VS_TESTS_UNIT_TEST_UTIL_H_
