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

// Valid-mode 1D convolutions over [channels x time] tensors.
//
// Integer-stride convolution and the 5/2 fractional-stride convolution share
// one accumulation kernel: output[c][t] sums kernel[c][i][j] * x[i][start(t) +
// spacing * j] over i, then j, left to right. Because the order of terms is
// fixed, FractionalConv(x, k, 5, 2) and Conv1d(NearestUpsample2(x), k, 5, 2)
// perform exactly the same float operations and agree bit for bit.

#ifndef W2VS_NUMERICS_CONV_H_
#define W2VS_NUMERICS_CONV_H_

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "w2vs/common/error.h"
#include "w2vs/numerics/kernels.h"
#include "w2vs/numerics/tensor.h"

namespace w2vs::num {

/// floor((L - dilation*(K-1) - 1) / stride) + 1; throws if L is shorter
/// than one receptive field.
inline std::size_t Conv1dOutputLength(std::size_t length, std::size_t kernel,
                                      std::size_t stride,
                                      std::size_t dilation) {
  if (stride == 0 || dilation == 0 || kernel == 0) {
    throw Error("conv1d: kernel, stride and dilation must be positive");
  }
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (length < span) {
    throw InputTooShort("input too short: conv1d needs at least " +
                        std::to_string(span) + " samples, got " +
                        std::to_string(length));
  }
  return (length - span) / stride + 1;
}

/// Start offset of output frame t for a rational stride num/den.
inline std::size_t FractionalStart(std::size_t t, std::size_t num,
                                   std::size_t den) {
  return (num * t) / den;
}

/// Number of t with floor(num*t/den) + K - 1 <= L - 1.
inline std::size_t FractionalOutputLength(std::size_t length,
                                          std::size_t kernel, std::size_t num,
                                          std::size_t den) {
  if (den == 0) throw Error("fractional_conv: stride denominator is zero");
  if (num == 0 || kernel == 0) {
    throw Error("fractional_conv: stride numerator and kernel must be positive");
  }
  if (length < kernel) {
    throw InputTooShort("input too short: fractional_conv needs at least " +
                        std::to_string(kernel) + " samples, got " +
                        std::to_string(length));
  }
  const std::size_t last_start = length - kernel;
  return ((last_start + 1) * den + num - 1) / num;
}

namespace internal {

inline void CheckConvShapes(const Shape& x, const Shape& k, const char* op) {
  if (x.size() != 2 || k.size() != 3) {
    throw ShapeError(std::string(op) + ": expected input [C_in x L] and kernel "
                     "[C_out x C_in x K], got " + ShapeString(x) + " and " +
                     ShapeString(k));
  }
  if (x[0] != k[1]) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x[0]) +
                     " channels, kernel expects " + std::to_string(k[1]));
  }
}

// Output frame t accumulates its taps in (input channel, tap) order; the
// loop over output channels runs innermost on a transposed kernel.
template <typename T, typename StartFn>
BasicTensor<T> ConvForward(const BasicTensor<T>& x, const BasicTensor<T>& k,
                           std::size_t out_len, std::size_t spacing,
                           StartFn start) {
  const std::size_t c_out = k.dim(0), c_in = k.dim(1), taps = k.dim(2);
  const std::size_t len = x.dim(1);
  BasicTensor<T> y(Shape{c_out, out_len});
  const T* xd = x.data().data();
  const std::vector<T> kt = TransposeBuffer(k.data().data(), c_out, c_in * taps);
  std::vector<T> acc(c_out);
  T* yd = y.data().data();
  for (std::size_t t = 0; t < out_len; ++t) {
    const std::size_t s = start(t);
    std::fill(acc.begin(), acc.end(), T(0));
    for (std::size_t i = 0; i < c_in; ++i) {
      const T* xi = xd + i * len + s;
      for (std::size_t j = 0; j < taps; ++j) {
        Axpy(acc.data(), kt.data() + (i * taps + j) * c_out, xi[spacing * j], c_out);
      }
    }
    for (std::size_t c = 0; c < c_out; ++c) yd[c * out_len + t] = acc[c];
  }
  return y;
}

template <typename T, typename StartFn>
void ConvBackward(const BasicTensor<T>& grad_out, const BasicTensor<T>& x,
                  const BasicTensor<T>& k, std::size_t spacing, StartFn start,
                  BasicTensor<T>* grad_x, BasicTensor<T>* grad_k) {
  const std::size_t c_out = k.dim(0), c_in = k.dim(1), taps = k.dim(2);
  const std::size_t len = x.dim(1), out_len = grad_out.dim(1);
  const std::size_t row = c_in * taps;
  const std::vector<T> gt = TransposeBuffer(grad_out.data().data(), c_out, out_len);
  const T* xd = x.data().data();
  const T* kd = k.data().data();
  if (grad_k) {
    std::vector<T> gkt(row * c_out, T(0));  // [c_in * taps x c_out]
    for (std::size_t t = 0; t < out_len; ++t) {
      const std::size_t s = start(t);
      const T* gtt = gt.data() + t * c_out;
      for (std::size_t i = 0; i < c_in; ++i) {
        const T* xi = xd + i * len + s;
        for (std::size_t j = 0; j < taps; ++j) {
          Axpy(gkt.data() + (i * taps + j) * c_out, gtt, xi[spacing * j], c_out);
        }
      }
    }
    T* gk = grad_k->data().data();
    for (std::size_t c = 0; c < c_out; ++c)
      for (std::size_t r = 0; r < row; ++r) gk[c * row + r] += gkt[r * c_out + c];
  }
  if (grad_x) {
    T* gx = grad_x->data().data();
    std::vector<T> u(row);
    for (std::size_t t = 0; t < out_len; ++t) {
      const std::size_t s = start(t);
      std::fill(u.begin(), u.end(), T(0));
      for (std::size_t c = 0; c < c_out; ++c) {
        Axpy(u.data(), kd + c * row, gt[t * c_out + c], row);
      }
      for (std::size_t i = 0; i < c_in; ++i) {
        T* gxi = gx + i * len + s;
        for (std::size_t j = 0; j < taps; ++j) gxi[spacing * j] += u[i * taps + j];
      }
    }
  }
}

}  // namespace internal

/// Valid convolution, no padding. x: [C_in x L], kernel: [C_out x C_in x K].
template <typename T>
BasicTensor<T> Conv1d(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                      std::size_t stride, std::size_t dilation) {
  internal::CheckConvShapes(x.shape(), kernel.shape(), "conv1d");
  const std::size_t out_len =
      Conv1dOutputLength(x.dim(1), kernel.dim(2), stride, dilation);
  return internal::ConvForward(x, kernel, out_len, dilation,
                               [stride](std::size_t t) { return stride * t; });
}

/// Convolution whose start offset advances by the rational stride num/den,
/// floor(num*t/den); for 5/2 the kernel moves alternately by 2 and 3 samples.
template <typename T>
BasicTensor<T> FractionalConv(const BasicTensor<T>& x,
                              const BasicTensor<T>& kernel, std::size_t num,
                              std::size_t den) {
  internal::CheckConvShapes(x.shape(), kernel.shape(), "fractional_conv");
  const std::size_t out_len =
      FractionalOutputLength(x.dim(1), kernel.dim(2), num, den);
  return internal::ConvForward(
      x, kernel, out_len, 1,
      [num, den](std::size_t t) { return FractionalStart(t, num, den); });
}

/// out[..][n] = in[..][n / 2] along the last axis.
template <typename T>
BasicTensor<T> NearestUpsample2(const BasicTensor<T>& x) {
  if (x.rank() == 0) throw ShapeError("nn_upsample_x2: scalar input");
  Shape shape = x.shape();
  const std::size_t len = shape.back();
  const std::size_t rows = x.size() / len;
  shape.back() = 2 * len;
  BasicTensor<T> y(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t n = 0; n < 2 * len; ++n) {
      y[r * 2 * len + n] = x[r * len + n / 2];
    }
  }
  return y;
}

/// Sums adjacent tap pairs: [C_out x C_in x 2m] -> [C_out x C_in x m].
template <typename T>
BasicTensor<T> FoldKernel(const BasicTensor<T>& kernel) {
  if (kernel.rank() != 3) {
    throw ShapeError("fold_kernel: expected [C_out x C_in x K], got " +
                     ShapeString(kernel.shape()));
  }
  const std::size_t taps = kernel.dim(2);
  if (taps % 2 != 0) {
    throw Error("fold_kernel: kernel length " + std::to_string(taps) +
                " is odd; folding needs an even length");
  }
  const std::size_t rows = kernel.dim(0) * kernel.dim(1);
  BasicTensor<T> out(Shape{kernel.dim(0), kernel.dim(1), taps / 2});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < taps / 2; ++j) {
      out[r * (taps / 2) + j] =
          kernel[r * taps + 2 * j] + kernel[r * taps + 2 * j + 1];
    }
  }
  return out;
}

}  // namespace w2vs::num

#endif  // W2VS_NUMERICS_CONV_H_
