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

// Named parameter tensors and their binding into a graph.

#ifndef W2VS_NUMERICS_PARAM_STORE_H_
#define W2VS_NUMERICS_PARAM_STORE_H_

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <type_traits>

#include "w2vs/common/error.h"
#include "w2vs/numerics/graph.h"
#include "w2vs/numerics/tensor.h"

namespace w2vs::num {

/// Ordered by name, which fixes every iteration order that touches it.
using ParamStore = std::map<std::string, Tensor>;

template <typename T>
class BoundParams {
 public:
  const Var<T>& at(const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw Error("missing parameter '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  const std::map<std::string, Var<T>>& vars() const { return vars_; }
  void Set(const std::string& name, Var<T> v) { vars_[name] = v; }

 private:
  std::map<std::string, Var<T>> vars_;
};

/// Registers each tensor as a graph leaf; `trainable(name)` decides whether
/// its gradient is collected. A null predicate makes every tensor trainable.
template <typename T>
BoundParams<T> Bind(Graph<T>& g, const ParamStore& params,
                    const std::function<bool(const std::string&)>& trainable = nullptr) {
  BoundParams<T> out;
  for (const auto& [name, tensor] : params) {
    const bool grad = !trainable || trainable(name);
    if constexpr (std::is_same_v<T, float>) {
      out.Set(name, g.Parameter(tensor, grad));
    } else {
      out.Set(name, g.Parameter(tensor.template Cast<T>(), grad));
    }
  }
  return out;
}

inline std::size_t CountParameters(const ParamStore& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

}  // namespace w2vs::num

#endif  // W2VS_NUMERICS_PARAM_STORE_H_
