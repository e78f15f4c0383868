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

// Differentiable operators on Graph variables.
//
// Every reduction runs left to right in index order so that a given input
// produces bit-identical output on every run. "Rows" ops treat a tensor as
// [rows x last-axis].

#ifndef W2VS_NUMERICS_OPS_H_
#define W2VS_NUMERICS_OPS_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "w2vs/common/error.h"
#include "w2vs/numerics/conv.h"
#include "w2vs/numerics/graph.h"
#include "w2vs/numerics/kernels.h"
#include "w2vs/numerics/rng.h"
#include "w2vs/numerics/tensor.h"

namespace w2vs::num {

namespace internal {

inline void RequireSameShape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + ShapeString(a) +
                     " vs " + ShapeString(b));
  }
}

inline void RequireRank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + ShapeString(s));
  }
}

inline std::size_t LastDim(const Shape& s, const char* op) {
  if (s.empty()) throw ShapeError(std::string(op) + ": empty axis");
  return s.back();
}

}  // namespace internal

// ---------------------------------------------------------------------------
// Elementwise and shape ops.

template <typename T>
Var<T> Add(Var<T> a, Var<T> b) {
  internal::RequireSameShape(a.shape(), b.shape(), "add");
  BasicTensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.id(), ib = b.id();
  return a.graph().Record("add", std::move(out), {a, b},
                          [ia, ib](Graph<T>& g, const BasicTensor<T>& go) {
                            for (int id : {ia, ib}) {
                              if (!g.requires_grad(id)) continue;
                              auto& gi = g.GradFor(id);
                              for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
                            }
                          });
}

template <typename T>
Var<T> Mul(Var<T> a, Var<T> b) {
  internal::RequireSameShape(a.shape(), b.shape(), "mul");
  BasicTensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ia = a.id(), ib = b.id();
  return a.graph().Record(
      "mul", std::move(out), {a, b},
      [a, b, ia, ib](Graph<T>& g, const BasicTensor<T>& go) {
        if (g.requires_grad(ia)) {
          auto& ga = g.GradFor(ia);
          const auto& bv = b.value();
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
        }
        if (g.requires_grad(ib)) {
          auto& gb = g.GradFor(ib);
          const auto& av = a.value();
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
        }
      });
}

template <typename T>
Var<T> Scale(Var<T> a, T s) {
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  const int ia = a.id();
  return a.graph().Record("scale", std::move(out), {a},
                          [ia, s](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& ga = g.GradFor(ia);
                            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
                          });
}

template <typename T>
Var<T> AddScalar(Var<T> a, T s) {
  BasicTensor<T> out = a.value();
  for (auto& v : out.data()) v += s;
  const int ia = a.id();
  return a.graph().Record("add_scalar", std::move(out), {a},
                          [ia](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& ga = g.GradFor(ia);
                            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                          });
}

template <typename T>
Var<T> Sum(Var<T> a) {
  T acc = T(0);
  for (T v : a.value().data()) acc += v;
  const int ia = a.id();
  return a.graph().Record("sum", BasicTensor<T>::Scalar(acc), {a},
                          [ia](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& ga = g.GradFor(ia);
                            for (auto& v : ga.data()) v += go[0];
                          });
}

template <typename T>
Var<T> Mean(Var<T> a) {
  return Scale(Sum(a), T(1) / static_cast<T>(a.value().size()));
}

/// Column means of [R x C] -> [C].
template <typename T>
Var<T> MeanRows(Var<T> a) {
  internal::RequireRank(a.shape(), 2, "mean_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  BasicTensor<T> out(Shape{cols});
  const auto& av = a.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += av(r, c);
  const T inv = T(1) / static_cast<T>(rows);
  for (auto& v : out.data()) v *= inv;
  const int ia = a.id();
  return a.graph().Record("mean_rows", std::move(out), {a},
                          [ia, rows, cols, inv](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& ga = g.GradFor(ia);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c) ga(r, c) += go[c] * inv;
                          });
}

template <typename T>
Var<T> Reshape(Var<T> a, Shape shape) {
  BasicTensor<T> out = a.value().Reshaped(std::move(shape));
  const int ia = a.id();
  return a.graph().Record("reshape", std::move(out), {a},
                          [ia](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& ga = g.GradFor(ia);
                            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                          });
}

template <typename T>
Var<T> Transpose(Var<T> a) {
  internal::RequireRank(a.shape(), 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  BasicTensor<T> out(Shape{c, r});
  const auto& av = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = av(i, j);
  const int ia = a.id();
  return a.graph().Record("transpose", std::move(out), {a},
                          [ia, r, c](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& ga = g.GradFor(ia);
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < c; ++j) ga(i, j) += go(j, i);
                          });
}

template <typename T>
Var<T> SliceCols(Var<T> a, std::size_t start, std::size_t count) {
  internal::RequireRank(a.shape(), 2, "slice_cols");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (count == 0 || start + count > cols) throw ShapeError("slice_cols: out of range");
  BasicTensor<T> out(Shape{rows, count});
  const auto& av = a.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, start + c);
  const int ia = a.id();
  return a.graph().Record("slice_cols", std::move(out), {a},
                          [ia, rows, start, count](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& ga = g.GradFor(ia);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < count; ++c) ga(r, start + c) += go(r, c);
                          });
}

template <typename T>
Var<T> SliceRows(Var<T> a, std::size_t start, std::size_t count) {
  internal::RequireRank(a.shape(), 2, "slice_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (count == 0 || start + count > rows) throw ShapeError("slice_rows: out of range");
  const auto& av = a.value();
  std::vector<T> data(av.data().begin() + static_cast<std::ptrdiff_t>(start * cols),
                      av.data().begin() + static_cast<std::ptrdiff_t>((start + count) * cols));
  const int ia = a.id();
  return a.graph().Record("slice_rows", BasicTensor<T>(Shape{count, cols}, std::move(data)), {a},
                          [ia, start, cols](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& ga = g.GradFor(ia);
                            for (std::size_t i = 0; i < go.size(); ++i) ga[start * cols + i] += go[i];
                          });
}

template <typename T>
Var<T> ConcatCols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    internal::RequireRank(p.shape(), 2, "concat_cols");
    if (p.dim(0) != rows) throw ShapeError("concat_cols: row count mismatch");
    offsets.push_back(total);
    total += p.dim(1);
  }
  BasicTensor<T> out(Shape{rows, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.dim(1); ++c) out(r, offsets[k] + c) = pv(r, c);
  }
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    ids.push_back(p.id());
    widths.push_back(p.dim(1));
  }
  return parts[0].graph().Record(
      "concat_cols", std::move(out), parts,
      [ids, widths, offsets, rows](Graph<T>& g, const BasicTensor<T>& go) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!g.requires_grad(ids[k])) continue;
          auto& gk = g.GradFor(ids[k]);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < widths[k]; ++c) gk(r, c) += go(r, offsets[k] + c);
        }
      });
}

/// Rows of `a` selected by `indices` (repeats allowed).
template <typename T>
Var<T> GatherRows(Var<T> a, std::vector<std::size_t> indices) {
  internal::RequireRank(a.shape(), 2, "gather_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (indices.empty()) throw ShapeError("gather_rows: no indices");
  BasicTensor<T> out(Shape{indices.size(), cols});
  const auto& av = a.value();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= rows) throw ShapeError("gather_rows: index out of range");
    for (std::size_t c = 0; c < cols; ++c) out(k, c) = av(indices[k], c);
  }
  const int ia = a.id();
  return a.graph().Record("gather_rows", std::move(out), {a},
                          [ia, idx = std::move(indices), cols](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& ga = g.GradFor(ia);
                            for (std::size_t k = 0; k < idx.size(); ++k)
                              for (std::size_t c = 0; c < cols; ++c) ga(idx[k], c) += go(k, c);
                          });
}

/// Copy of x with the listed rows replaced by `row` (shape [C]).
template <typename T>
Var<T> ReplaceRows(Var<T> x, const std::vector<std::size_t>& rows_to_replace, Var<T> row) {
  internal::RequireRank(x.shape(), 2, "replace_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (row.value().size() != cols) throw ShapeError("replace_rows: row width mismatch");
  std::vector<char> replaced(rows, 0);
  for (std::size_t r : rows_to_replace) {
    if (r >= rows) throw ShapeError("replace_rows: index out of range");
    replaced[r] = 1;
  }
  BasicTensor<T> out = x.value();
  const auto& rv = row.value();
  for (std::size_t r = 0; r < rows; ++r)
    if (replaced[r])
      for (std::size_t c = 0; c < cols; ++c) out(r, c) = rv[c];
  const int ix = x.id(), ir = row.id();
  return x.graph().Record(
      "replace_rows", std::move(out), {x, row},
      [ix, ir, replaced = std::move(replaced), rows, cols](Graph<T>& g, const BasicTensor<T>& go) {
        if (g.requires_grad(ix)) {
          auto& gx = g.GradFor(ix);
          for (std::size_t r = 0; r < rows; ++r)
            if (!replaced[r])
              for (std::size_t c = 0; c < cols; ++c) gx(r, c) += go(r, c);
        }
        if (g.requires_grad(ir)) {
          auto& gr = g.GradFor(ir);
          for (std::size_t r = 0; r < rows; ++r)
            if (replaced[r])
              for (std::size_t c = 0; c < cols; ++c) gr[c] += go(r, c);
        }
      });
}

// ---------------------------------------------------------------------------
// Linear algebra.

/// [m x k] * [k x n].
template <typename T>
Var<T> MatMul(Var<T> a, Var<T> b) {
  internal::RequireRank(a.shape(), 2, "matmul");
  internal::RequireRank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul: inner dimension mismatch");
  BasicTensor<T> out(Shape{m, n});
  const T* ad = a.value().data().data();
  const T* bd = b.value().data().data();
  T* od = out.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) internal::Axpy(od + i * n, bd + p * n, ad[i * k + p], n);
  const int ia = a.id(), ib = b.id();
  return a.graph().Record(
      "matmul", std::move(out), {a, b},
      [a, b, ia, ib, m, k, n](Graph<T>& g, const BasicTensor<T>& go) {
        const T* ad = a.value().data().data();
        const T* gd = go.data().data();
        if (g.requires_grad(ia)) {
          T* ga = g.GradFor(ia).data().data();
          const std::vector<T> bt = internal::TransposeBuffer(b.value().data().data(), k, n);
          std::vector<T> acc(k);
          for (std::size_t i = 0; i < m; ++i) {
            std::fill(acc.begin(), acc.end(), T(0));
            for (std::size_t j = 0; j < n; ++j) internal::Axpy(acc.data(), bt.data() + j * k, gd[i * n + j], k);
            for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += acc[p];
          }
        }
        if (g.requires_grad(ib)) {
          T* gb = g.GradFor(ib).data().data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) internal::Axpy(gb + p * n, gd + i * n, ad[i * k + p], n);
        }
      });
}

/// [m x k] * [n x k]^T.
template <typename T>
Var<T> MatMulNT(Var<T> a, Var<T> b) {
  internal::RequireRank(a.shape(), 2, "matmul_nt");
  internal::RequireRank(b.shape(), 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw ShapeError("matmul_nt: inner dimension mismatch");
  BasicTensor<T> out(Shape{m, n});
  const T* ad = a.value().data().data();
  const std::vector<T> bt = internal::TransposeBuffer(b.value().data().data(), n, k);
  T* od = out.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) internal::Axpy(od + i * n, bt.data() + p * n, ad[i * k + p], n);
  const int ia = a.id(), ib = b.id();
  return a.graph().Record(
      "matmul_nt", std::move(out), {a, b},
      [a, b, ia, ib, m, k, n](Graph<T>& g, const BasicTensor<T>& go) {
        const T* gd = go.data().data();
        if (g.requires_grad(ia)) {
          T* ga = g.GradFor(ia).data().data();
          const T* bd = b.value().data().data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) internal::Axpy(ga + i * k, bd + j * k, gd[i * n + j], k);
        }
        if (g.requires_grad(ib)) {
          T* gb = g.GradFor(ib).data().data();
          const T* ad = a.value().data().data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) internal::Axpy(gb + j * k, ad + i * k, gd[i * n + j], k);
        }
      });
}

/// x: [R x in], weight: [out x in], bias: [out] -> [R x out].
template <typename T>
Var<T> Linear(Var<T> x, Var<T> weight, Var<T> bias) {
  internal::RequireRank(x.shape(), 2, "linear");
  internal::RequireRank(weight.shape(), 2, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear: input width " + std::to_string(in) +
                     " does not match weight " + ShapeString(weight.shape()));
  }
  if (bias.value().size() != out_dim) throw ShapeError("linear: bias size mismatch");
  BasicTensor<T> out(Shape{rows, out_dim});
  const T* xd = x.value().data().data();
  const T* bd = bias.value().data().data();
  const std::vector<T> wt = internal::TransposeBuffer(weight.value().data().data(), out_dim, in);
  T* od = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T* orow = od + r * out_dim;
    for (std::size_t i = 0; i < in; ++i) internal::Axpy(orow, wt.data() + i * out_dim, xd[r * in + i], out_dim);
    for (std::size_t o = 0; o < out_dim; ++o) orow[o] += bd[o];
  }
  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.graph().Record(
      "linear", std::move(out), {x, weight, bias},
      [x, weight, ix, iw, ib, rows, in, out_dim](Graph<T>& g, const BasicTensor<T>& go) {
        const T* gd = go.data().data();
        if (g.requires_grad(ix)) {
          T* gx = g.GradFor(ix).data().data();
          const T* wd = weight.value().data().data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t o = 0; o < out_dim; ++o) internal::Axpy(gx + r * in, wd + o * in, gd[r * out_dim + o], in);
        }
        if (g.requires_grad(iw)) {
          T* gw = g.GradFor(iw).data().data();
          const T* xd = x.value().data().data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t o = 0; o < out_dim; ++o) internal::Axpy(gw + o * in, xd + r * in, gd[r * out_dim + o], in);
        }
        if (g.requires_grad(ib)) {
          T* gb = g.GradFor(ib).data().data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t o = 0; o < out_dim; ++o) gb[o] += gd[r * out_dim + o];
        }
      });
}

// ---------------------------------------------------------------------------
// Normalisation and activations.

/// Normalises each row over the last axis, then applies gain and bias.
template <typename T>
Var<T> LayerNorm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  const std::size_t cols = internal::LastDim(x.shape(), "layer_norm");
  const std::size_t rows = x.value().size() / cols;
  if (gain.value().size() != cols || bias.value().size() != cols) {
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(cols) + " entries");
  }
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  BasicTensor<T> out(x.shape());
  std::vector<T> xhat(xv.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data().data() + r * cols;
    T mean = T(0);
    for (std::size_t c = 0; c < cols; ++c) mean += row[c];
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<T>(cols);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (row[c] - mean) * is;
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * gv[c] + bv[c];
    }
  }
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph().Record(
      "layer_norm", std::move(out), {x, gain, bias},
      [gain, ix, ig, ib, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Graph<T>& g, const BasicTensor<T>& go) {
        const auto& gv = gain.value();
        if (g.requires_grad(ig)) {
          auto& gg = g.GradFor(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gg[c] += go[r * cols + c] * xhat[r * cols + c];
        }
        if (g.requires_grad(ib)) {
          auto& gb = g.GradFor(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += go[r * cols + c];
        }
        if (g.requires_grad(ix)) {
          auto& gx = g.GradFor(ix);
          const T n = static_cast<T>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            T sum_d = T(0), sum_dh = T(0);
            for (std::size_t c = 0; c < cols; ++c) {
              const T d = go[r * cols + c] * gv[c];
              sum_d += d;
              sum_dh += d * xhat[r * cols + c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
              const T d = go[r * cols + c] * gv[c];
              gx[r * cols + c] +=
                  inv_std[r] * (d - sum_d / n - xhat[r * cols + c] * sum_dh / n);
            }
          }
        }
      });
}

/// Exact (erf) GELU.
template <typename T>
Var<T> Gelu(Var<T> x) {
  const auto& xv = x.value();
  BasicTensor<T> out(x.shape());
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
  }
  const int ix = x.id();
  return x.graph().Record("gelu", std::move(out), {x},
                          [x, ix, inv_sqrt2](Graph<T>& g, const BasicTensor<T>& go) {
                            const auto& xv = x.value();
                            auto& gx = g.GradFor(ix);
                            const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
                            for (std::size_t i = 0; i < xv.size(); ++i) {
                              const T v = xv[i];
                              const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
                              const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
                              gx[i] += go[i] * (cdf + v * pdf);
                            }
                          });
}

template <typename T>
Var<T> Exp(Var<T> x) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.data()) v = std::exp(v);
  const int ix = x.id();
  BasicTensor<T> saved = out;
  return x.graph().Record("exp", std::move(out), {x},
                          [ix, saved = std::move(saved)](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& gx = g.GradFor(ix);
                            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * saved[i];
                          });
}

template <typename T>
Var<T> Log(Var<T> x) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.data()) {
    if (!(v > T(0))) throw NonFiniteError("log of non-positive value");
    v = std::log(v);
  }
  const int ix = x.id();
  return x.graph().Record("log", std::move(out), {x},
                          [x, ix](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& gx = g.GradFor(ix);
                            const auto& xv = x.value();
                            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] / xv[i];
                          });
}

namespace internal {

template <typename T>
void SoftmaxRowsInPlace(std::span<T> data, std::size_t cols) {
  const std::size_t rows = data.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = data.data() + r * cols;
    T mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T sum = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
  }
}

// d(softmax)/dx applied to go: y * (go - sum(go * y)), scaled.
template <typename T>
void SoftmaxBackwardRows(const BasicTensor<T>& y, const BasicTensor<T>& go,
                         std::size_t cols, T scale, BasicTensor<T>& gx) {
  const std::size_t rows = y.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    T dot = T(0);
    for (std::size_t c = 0; c < cols; ++c) dot += go[r * cols + c] * y[r * cols + c];
    for (std::size_t c = 0; c < cols; ++c) {
      gx[r * cols + c] += scale * y[r * cols + c] * (go[r * cols + c] - dot);
    }
  }
}

}  // namespace internal

template <typename T>
Var<T> Softmax(Var<T> x) {
  const std::size_t cols = internal::LastDim(x.shape(), "softmax");
  BasicTensor<T> out = x.value();
  internal::SoftmaxRowsInPlace(out.data(), cols);
  BasicTensor<T> saved = out;
  const int ix = x.id();
  return x.graph().Record("softmax", std::move(out), {x},
                          [ix, cols, saved = std::move(saved)](Graph<T>& g, const BasicTensor<T>& go) {
                            internal::SoftmaxBackwardRows(saved, go, cols, T(1), g.GradFor(ix));
                          });
}

template <typename T>
Var<T> LogSoftmax(Var<T> x) {
  const std::size_t cols = internal::LastDim(x.shape(), "log_softmax");
  const std::size_t rows = x.value().size() / cols;
  BasicTensor<T> out = x.value();
  BasicTensor<T> probs(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out.data().data() + r * cols;
    T mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T sum = T(0);
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(row[c] - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] -= lse;
      probs[r * cols + c] = std::exp(row[c]);
    }
  }
  const int ix = x.id();
  return x.graph().Record("log_softmax", std::move(out), {x},
                          [ix, rows, cols, probs = std::move(probs)](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& gx = g.GradFor(ix);
                            for (std::size_t r = 0; r < rows; ++r) {
                              T sum = T(0);
                              for (std::size_t c = 0; c < cols; ++c) sum += go[r * cols + c];
                              for (std::size_t c = 0; c < cols; ++c)
                                gx[r * cols + c] += go[r * cols + c] - probs[r * cols + c] * sum;
                            }
                          });
}

/// Row-wise cosine similarity of two [R x D] tensors -> [R].
template <typename T>
Var<T> CosineSimilarity(Var<T> a, Var<T> b, T eps = T(1e-8)) {
  internal::RequireRank(a.shape(), 2, "cosine_similarity");
  internal::RequireSameShape(a.shape(), b.shape(), "cosine_similarity");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const auto& av = a.value();
  const auto& bv = b.value();
  BasicTensor<T> out(Shape{rows});
  std::vector<T> na(rows), nb(rows), dots(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T dot = T(0), sa = T(0), sb = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      dot += av(r, c) * bv(r, c);
      sa += av(r, c) * av(r, c);
      sb += bv(r, c) * bv(r, c);
    }
    na[r] = std::max(std::sqrt(sa), eps);
    nb[r] = std::max(std::sqrt(sb), eps);
    dots[r] = dot;
    out[r] = dot / (na[r] * nb[r]);
  }
  const int ia = a.id(), ib = b.id();
  return a.graph().Record(
      "cosine_similarity", std::move(out), {a, b},
      [a, b, ia, ib, rows, cols, eps, na = std::move(na), nb = std::move(nb), dots = std::move(dots)](
          Graph<T>& g, const BasicTensor<T>& go) {
        const auto& av = a.value();
        const auto& bv = b.value();
        for (std::size_t r = 0; r < rows; ++r) {
          const T denom = na[r] * nb[r];
          const T cosv = dots[r] / denom;
          // Clamped norms contribute no gradient of their own.
          const bool a_free = na[r] > eps, b_free = nb[r] > eps;
          if (g.requires_grad(ia)) {
            auto& ga = g.GradFor(ia);
            for (std::size_t c = 0; c < cols; ++c) {
              T d = bv(r, c) / denom;
              if (a_free) d -= cosv * av(r, c) / (na[r] * na[r]);
              ga(r, c) += go[r] * d;
            }
          }
          if (g.requires_grad(ib)) {
            auto& gb = g.GradFor(ib);
            for (std::size_t c = 0; c < cols; ++c) {
              T d = av(r, c) / denom;
              if (b_free) d -= cosv * bv(r, c) / (nb[r] * nb[r]);
              gb(r, c) += go[r] * d;
            }
          }
        }
      });
}

/// Gumbel-softmax over the last axis. With `hard`, the forward value is the
/// one-hot argmax while the backward pass uses the soft distribution
/// (straight-through).
template <typename T>
Var<T> GumbelSoftmax(Var<T> logits, T temperature, bool hard, CounterRng& rng) {
  if (!(temperature > T(0))) {
    throw Error("gumbel_softmax: temperature must be positive, got " +
                std::to_string(static_cast<double>(temperature)));
  }
  const std::size_t cols = internal::LastDim(logits.shape(), "gumbel_softmax");
  BasicTensor<T> soft = logits.value();
  for (auto& v : soft.data()) {
    const double gumbel = -std::log(-std::log(rng.UniformOpen()));
    v = (v + static_cast<T>(gumbel)) / temperature;
  }
  internal::SoftmaxRowsInPlace(soft.data(), cols);
  BasicTensor<T> out = soft;
  if (hard) {
    const std::size_t rows = soft.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < cols; ++c)
        if (soft[r * cols + c] > soft[r * cols + best]) best = c;
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = c == best ? T(1) : T(0);
    }
  }
  const int il = logits.id();
  return logits.graph().Record(
      hard ? "gumbel_softmax_hard" : "gumbel_softmax", std::move(out), {logits},
      [il, cols, temperature, soft = std::move(soft)](Graph<T>& g, const BasicTensor<T>& go) {
        internal::SoftmaxBackwardRows(soft, go, cols, T(1) / temperature, g.GradFor(il));
      });
}

/// Inverted dropout; identity when rate is 0.
template <typename T>
Var<T> Dropout(Var<T> x, double rate, CounterRng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  BasicTensor<T> mask(x.shape());
  for (auto& m : mask.data()) m = rng.Uniform() < rate ? T(0) : keep_scale;
  BasicTensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const int ix = x.id();
  return x.graph().Record("dropout", std::move(out), {x},
                          [ix, mask = std::move(mask)](Graph<T>& g, const BasicTensor<T>& go) {
                            auto& gx = g.GradFor(ix);
                            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
                          });
}

/// Mean over rows of -log softmax(logits)[row][target[row]].
template <typename T>
Var<T> CrossEntropy(Var<T> logits, const std::vector<std::size_t>& targets) {
  internal::RequireRank(logits.shape(), 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(rows) + " rows");
  }
  for (std::size_t t : targets)
    if (t >= cols) throw ShapeError("cross_entropy: target index out of range");
  BasicTensor<T> probs = logits.value();
  internal::SoftmaxRowsInPlace(probs.data(), cols);
  T total = T(0);
  const auto& lv = logits.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = lv.data().data() + r * cols;
    T mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T sum = T(0);
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(row[c] - mx);
    total += mx + std::log(sum) - row[targets[r]];
  }
  const T inv = T(1) / static_cast<T>(rows);
  const int il = logits.id();
  return logits.graph().Record(
      "cross_entropy", BasicTensor<T>::Scalar(total * inv), {logits},
      [il, rows, cols, inv, targets, probs = std::move(probs)](Graph<T>& g, const BasicTensor<T>& go) {
        auto& gl = g.GradFor(il);
        const T s = go[0] * inv;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c)
            gl(r, c) += s * (probs(r, c) - (c == targets[r] ? T(1) : T(0)));
      });
}

/// exp(entropy) of each row of a probability tensor (natural log), i.e. the
/// row's perplexity. Zero entries contribute nothing to the entropy.
template <typename T>
Var<T> ExpEntropy(Var<T> p) {
  const std::size_t cols = internal::LastDim(p.shape(), "exp_entropy");
  const std::size_t rows = p.value().size() / cols;
  const auto& pv = p.value();
  BasicTensor<T> out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    T h = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      const T q = pv[r * cols + c];
      if (q > T(0)) h -= q * std::log(q);
    }
    out[r] = std::exp(h);
  }
  BasicTensor<T> saved = out;
  const int ip = p.id();
  return p.graph().Record(
      "exp_entropy", std::move(out), {p},
      [p, ip, rows, cols, saved = std::move(saved)](Graph<T>& g, const BasicTensor<T>& go) {
        const auto& pv = p.value();
        auto& gp = g.GradFor(ip);
        const T tiny = std::numeric_limits<T>::min();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            const T q = std::max(pv[r * cols + c], tiny);
            gp[r * cols + c] += go[r] * saved[r] * (-std::log(q) - T(1));
          }
      });
}

// ---------------------------------------------------------------------------
// Convolutions.

template <typename T>
Var<T> Conv1d(Var<T> x, Var<T> kernel, std::size_t stride, std::size_t dilation) {
  BasicTensor<T> out = num::Conv1d(x.value(), kernel.value(), stride, dilation);
  const int ix = x.id(), ik = kernel.id();
  return x.graph().Record(
      "conv1d", std::move(out), {x, kernel},
      [x, kernel, ix, ik, stride, dilation](Graph<T>& g, const BasicTensor<T>& go) {
        internal::ConvBackward(go, x.value(), kernel.value(), dilation,
                               [stride](std::size_t t) { return stride * t; },
                               g.requires_grad(ix) ? &g.GradFor(ix) : nullptr,
                               g.requires_grad(ik) ? &g.GradFor(ik) : nullptr);
      });
}

template <typename T>
Var<T> FractionalConv(Var<T> x, Var<T> kernel, std::size_t num, std::size_t den) {
  BasicTensor<T> out = num::FractionalConv(x.value(), kernel.value(), num, den);
  const int ix = x.id(), ik = kernel.id();
  return x.graph().Record(
      "fractional_conv", std::move(out), {x, kernel},
      [x, kernel, ix, ik, num, den](Graph<T>& g, const BasicTensor<T>& go) {
        internal::ConvBackward(go, x.value(), kernel.value(), 1,
                               [num, den](std::size_t t) { return FractionalStart(t, num, den); },
                               g.requires_grad(ix) ? &g.GradFor(ix) : nullptr,
                               g.requires_grad(ik) ? &g.GradFor(ik) : nullptr);
      });
}

/// Length-preserving grouped convolution over time for [T x D] sequences.
/// weight: [D x D/groups x K] with odd K, zero padding of (K-1)/2 each side.
template <typename T>
Var<T> GroupedConvSame(Var<T> x, Var<T> weight, Var<T> bias, std::size_t groups) {
  internal::RequireRank(x.shape(), 2, "grouped_conv");
  internal::RequireRank(weight.shape(), 3, "grouped_conv");
  const std::size_t len = x.dim(0), dim = x.dim(1), taps = weight.dim(2);
  if (groups == 0 || dim % groups != 0) throw ShapeError("grouped_conv: dim not divisible by groups");
  const std::size_t per = dim / groups;
  if (weight.dim(0) != dim || weight.dim(1) != per) throw ShapeError("grouped_conv: weight shape mismatch");
  if (taps % 2 == 0) throw ShapeError("grouped_conv: kernel size must be odd");
  if (bias.value().size() != dim) throw ShapeError("grouped_conv: bias size mismatch");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(taps / 2);
  const T* xd = x.value().data().data();
  const T* bd = bias.value().data().data();
  // [per * taps x dim]: the weights of tap (i, j) for every output channel.
  const std::vector<T> wt = internal::TransposeBuffer(weight.value().data().data(), dim, per * taps);
  BasicTensor<T> out(Shape{len, dim});
  T* od = out.data().data();
  for (std::size_t t = 0; t < len; ++t) {
    T* orow = od + t * dim;
    for (std::size_t i = 0; i < per; ++i)
      for (std::size_t j = 0; j < taps; ++j) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) - pad;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(len)) continue;
        const T* xs = xd + static_cast<std::size_t>(s) * dim;
        const T* w = wt.data() + (i * taps + j) * dim;
        for (std::size_t g0 = 0; g0 < dim; g0 += per) internal::Axpy(orow + g0, w + g0, xs[g0 + i], per);
      }
    for (std::size_t c = 0; c < dim; ++c) orow[c] += bd[c];
  }
  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.graph().Record(
      "grouped_conv", std::move(out), {x, weight, bias},
      [x, weight, ix, iw, ib, len, dim, per, taps, pad](Graph<T>& g, const BasicTensor<T>& go) {
        const T* gd = go.data().data();
        if (g.requires_grad(ib)) {
          T* gb = g.GradFor(ib).data().data();
          for (std::size_t t = 0; t < len; ++t)
            for (std::size_t c = 0; c < dim; ++c) gb[c] += gd[t * dim + c];
        }
        auto valid = [&](std::size_t t, std::size_t j, std::size_t& s) {
          const std::ptrdiff_t v = static_cast<std::ptrdiff_t>(t + j) - pad;
          if (v < 0 || v >= static_cast<std::ptrdiff_t>(len)) return false;
          s = static_cast<std::size_t>(v);
          return true;
        };
        if (g.requires_grad(iw)) {
          const T* xd = x.value().data().data();
          std::vector<T> gwt(per * taps * dim, T(0));
          std::size_t s = 0;
          for (std::size_t t = 0; t < len; ++t)
            for (std::size_t i = 0; i < per; ++i)
              for (std::size_t j = 0; j < taps; ++j) {
                if (!valid(t, j, s)) continue;
                T* w = gwt.data() + (i * taps + j) * dim;
                for (std::size_t g0 = 0; g0 < dim; g0 += per) {
                  internal::Axpy(w + g0, gd + t * dim + g0, xd[s * dim + g0 + i], per);
                }
              }
          T* gw = g.GradFor(iw).data().data();
          const std::size_t row = per * taps;
          for (std::size_t c = 0; c < dim; ++c)
            for (std::size_t r = 0; r < row; ++r) gw[c * row + r] += gwt[r * dim + c];
        }
        if (g.requires_grad(ix)) {
          // [dim * taps x per]: w(c, :, j) contiguous.
          const T* wd = weight.value().data().data();
          std::vector<T> wr(dim * taps * per);
          for (std::size_t c = 0; c < dim; ++c)
            for (std::size_t i = 0; i < per; ++i)
              for (std::size_t j = 0; j < taps; ++j) wr[(c * taps + j) * per + i] = wd[(c * per + i) * taps + j];
          T* gx = g.GradFor(ix).data().data();
          std::size_t s = 0;
          for (std::size_t t = 0; t < len; ++t)
            for (std::size_t j = 0; j < taps; ++j) {
              if (!valid(t, j, s)) continue;
              for (std::size_t c = 0; c < dim; ++c) {
                const std::size_t g0 = (c / per) * per;
                internal::Axpy(gx + s * dim + g0, wr.data() + (c * taps + j) * per, gd[t * dim + c], per);
              }
            }
        }
      });
}

}  // namespace w2vs::num

#endif  // W2VS_NUMERICS_OPS_H_
