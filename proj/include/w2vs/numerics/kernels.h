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


// Inner loops shared by the dense and convolution operators. They are
// written so that each output element still accumulates its terms in a
// fixed order while the loop runs over independent outputs, which lets the
// compiler vectorise it without reassociating any sum.

#ifndef W2VS_NUMERICS_KERNELS_H_
#define W2VS_NUMERICS_KERNELS_H_

#include <cstddef>
#include <vector>

namespace w2vs::num::internal {

/// y[i] += a * x[i].
template <typename T>
inline void Axpy(T* __restrict y, const T* __restrict x, T a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

/// Row-major [rows x cols] -> [cols x rows].
template <typename T>
std::vector<T> TransposeBuffer(const T* a, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
  return out;
}

}  // namespace w2vs::num::internal

#endif  // W2VS_NUMERICS_KERNELS_H_
