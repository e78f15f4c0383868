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

#ifndef W2VS_NUMERICS_GRAD_CHECK_H_
#define W2VS_NUMERICS_GRAD_CHECK_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "w2vs/common/error.h"
#include "w2vs/numerics/graph.h"
#include "w2vs/numerics/rng.h"
#include "w2vs/numerics/tensor.h"

namespace w2vs::num {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;  // which input tensor
  std::size_t worst_index = 0;  // flat index inside it
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Builds a scalar loss from leaf variables bound to the probe point.
using ScalarFn =
    std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;

// Compares reverse-mode gradients of `fn` at `point` against central
// differences (f(x+eps) - f(x-eps)) / (2 eps), one coordinate at a time.
// Relative error per coordinate uses max(|analytic|, |numeric|, 1e-8) as the
// denominator; the worst coordinate is reported.
inline GradCheckResult GradCheck(const ScalarFn& fn,
                                 const std::vector<TensorD>& point,
                                 double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw Error("grad_check: epsilon must be in (0, 1e-2], got " +
                std::to_string(eps));
  }
  auto evaluate = [&](const std::vector<TensorD>& at) {
    Graph<double> g;
    std::vector<Var<double>> leaves;
    for (const auto& t : at) leaves.push_back(g.Parameter(t, false));
    const double v = fn(g, leaves).value().item();
    if (!std::isfinite(v)) {
      throw NonFiniteError("grad_check: non-finite function value at probe");
    }
    return v;
  };

  Graph<double> g;
  std::vector<Var<double>> leaves;
  for (const auto& t : point) leaves.push_back(g.Parameter(t, true));
  Var<double> loss = fn(g, leaves);
  if (!std::isfinite(loss.value().item())) {
    throw NonFiniteError("grad_check: non-finite function value at point");
  }
  g.Backward(loss);

  GradCheckResult result;
  std::vector<TensorD> probe = point;
  for (std::size_t k = 0; k < point.size(); ++k) {
    const TensorD analytic = g.Grad(leaves[k]);
    for (std::size_t i = 0; i < point[k].size(); ++i) {
      const double orig = point[k][i];
      probe[k][i] = orig + eps;
      const double up = evaluate(probe);
      probe[k][i] = orig - eps;
      const double down = evaluate(probe);
      probe[k][i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (result.coordinates++ == 0 || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_input = k;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

// Same comparison along unit directions instead of coordinate axes: for
// every input tensor, `directions` directions v confined to that tensor,
// comparing grad . v with (f(x + eps v) - f(x - eps v)) / (2 eps).
//
// Each v is the normalised sum of the unit analytic gradient g/|g| and an
// independent unit Gaussian vector r. Then grad . v stays near |g|/sqrt(2),
// so the comparison does not degenerate into noise the way a purely random
// direction nearly orthogonal to g does, while any error component of the
// analytic gradient along r still shows up. Tensors whose analytic gradient
// is zero use r alone. worst_index is the direction number.
inline GradCheckResult DirectionalGradCheck(const ScalarFn& fn,
                                            const std::vector<TensorD>& point,
                                            double eps, CounterRng& rng,
                                            int directions = 1) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw Error("grad_check: epsilon must be in (0, 1e-2], got " +
                std::to_string(eps));
  }
  auto evaluate = [&](const std::vector<TensorD>& at) {
    Graph<double> g;
    std::vector<Var<double>> leaves;
    for (const auto& t : at) leaves.push_back(g.Parameter(t, false));
    const double v = fn(g, leaves).value().item();
    if (!std::isfinite(v)) {
      throw NonFiniteError("grad_check: non-finite function value at probe");
    }
    return v;
  };

  Graph<double> g;
  std::vector<Var<double>> leaves;
  for (const auto& t : point) leaves.push_back(g.Parameter(t, true));
  Var<double> loss = fn(g, leaves);
  if (!std::isfinite(loss.value().item())) {
    throw NonFiniteError("grad_check: non-finite function value at point");
  }
  g.Backward(loss);

  GradCheckResult result;
  std::vector<TensorD> probe = point;
  for (std::size_t k = 0; k < point.size(); ++k) {
    const TensorD grad = g.Grad(leaves[k]);
    double grad_norm = 0;
    for (double v : grad.data()) grad_norm += v * v;
    grad_norm = std::sqrt(grad_norm);
    auto normalise = [](TensorD& t) {
      double n = 0;
      for (double v : t.data()) n += v * v;
      n = std::sqrt(n);
      for (double& v : t.data()) v /= n;
    };
    for (int d = 0; d < directions; ++d) {
      TensorD dir(point[k].shape());
      for (double& v : dir.data()) v = rng.Normal();
      normalise(dir);
      if (grad_norm > 0) {
        for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += grad[i] / grad_norm;
        normalise(dir);
      }
      double a = 0;
      for (std::size_t i = 0; i < dir.size(); ++i) a += grad[i] * dir[i];
      for (std::size_t i = 0; i < dir.size(); ++i) probe[k][i] = point[k][i] + eps * dir[i];
      const double up = evaluate(probe);
      for (std::size_t i = 0; i < dir.size(); ++i) probe[k][i] = point[k][i] - eps * dir[i];
      const double down = evaluate(probe);
      probe[k] = point[k];
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (result.coordinates++ == 0 || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_input = k;
        result.worst_index = static_cast<std::size_t>(d);
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace w2vs::num

#endif  // W2VS_NUMERICS_GRAD_CHECK_H_
