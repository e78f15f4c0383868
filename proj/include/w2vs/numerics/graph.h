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

// Tape-based reverse-mode differentiation.
//
// A Graph records every operator application as a node in creation order,
// so the tape is already a topological order and backward() is a single
// reverse sweep. Nodes that depend on no gradient-requiring leaf carry no
// backward function and are skipped.

#ifndef W2VS_NUMERICS_GRAPH_H_
#define W2VS_NUMERICS_GRAPH_H_

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "w2vs/common/error.h"
#include "w2vs/numerics/tensor.h"

namespace w2vs::num {

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, int id) : graph_(graph), id_(id) {}

  const BasicTensor<T>& value() const { return graph_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool requires_grad() const { return graph_->requires_grad(*this); }

  Graph<T>& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph<T>* graph_ = nullptr;
  int id_ = -1;
};

template <typename T>
class Graph {
 public:
  /// Receives the gradient of the node's output and accumulates input grads
  /// through Graph::GradFor.
  using BackwardFn = std::function<void(Graph&, const BasicTensor<T>&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> Constant(BasicTensor<T> value) {
    return Push("constant", std::move(value), {}, false, nullptr);
  }

  /// Leaf whose gradient is collected when `requires_grad` is set.
  Var<T> Parameter(BasicTensor<T> value, bool requires_grad = true) {
    return Push("parameter", std::move(value), {}, requires_grad, nullptr);
  }

  /// Adds an operator node. The value must be finite.
  Var<T> Record(const char* op, BasicTensor<T> value,
                std::initializer_list<Var<T>> inputs, BackwardFn backward) {
    return Record(op, std::move(value), std::vector<Var<T>>(inputs),
                  std::move(backward));
  }

  Var<T> Record(const char* op, BasicTensor<T> value,
                const std::vector<Var<T>>& inputs, BackwardFn backward) {
    if (!value.AllFinite()) {
      throw NonFiniteError(std::string("non-finite value produced by ") + op);
    }
    bool needs = false;
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const Var<T>& v : inputs) {
      if (&v.graph() != this) throw Error(std::string(op) + ": mixed graphs");
      ids.push_back(v.id());
      needs = needs || nodes_[static_cast<std::size_t>(v.id())].requires_grad;
    }
    return Push(op, std::move(value), std::move(ids), needs,
                needs ? std::move(backward) : nullptr);
  }

  /// Reverse sweep from a single-element loss node.
  void Backward(Var<T> loss) {
    Node& root = node(loss);
    if (root.value.size() != 1) {
      throw ShapeError("backward: loss must be scalar, got shape " +
                       ShapeString(root.value.shape()));
    }
    if (!root.requires_grad) return;
    GradFor(loss.id())[0] += T(1);
    for (int id = loss.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.requires_grad || !n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

  const BasicTensor<T>& value(Var<T> v) const { return node(v).value; }
  bool requires_grad(Var<T> v) const { return node(v).requires_grad; }
  bool requires_grad(int id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }

  /// Gradient of the last Backward() loss w.r.t. `v`; zeros if none flowed.
  BasicTensor<T> Grad(Var<T> v) const {
    const Node& n = node(v);
    return n.has_grad ? n.grad : BasicTensor<T>(n.value.shape());
  }

  /// Accumulator for node `id`, zero-initialised on first use. Shape always
  /// equals the node value's shape.
  BasicTensor<T>& GradFor(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
      n.grad = BasicTensor<T>(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }
  const char* op_name(Var<T> v) const { return node(v).op; }

 private:
  struct Node {
    const char* op;
    BasicTensor<T> value;
    BasicTensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
  };

  Var<T> Push(const char* op, BasicTensor<T> value, std::vector<int> inputs,
              bool requires_grad, BackwardFn backward) {
    Node n{op, std::move(value), BasicTensor<T>(), false, requires_grad,
           std::move(inputs), std::move(backward)};
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  Node& node(Var<T> v) {
    if (v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
      throw Error("invalid graph variable");
    }
    return nodes_[static_cast<std::size_t>(v.id())];
  }
  const Node& node(Var<T> v) const {
    if (v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
      throw Error("invalid graph variable");
    }
    return nodes_[static_cast<std::size_t>(v.id())];
  }

  std::deque<Node> nodes_;
};

}  // namespace w2vs::num

#endif  // W2VS_NUMERICS_GRAPH_H_
