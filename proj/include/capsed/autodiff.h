// Copyright 2026 The capsed Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CAPSED_AUTODIFF_H_
#define CAPSED_AUTODIFF_H_

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "capsed/tensor.h"

namespace capsed {

// Named trainable tensors. std::map keeps iteration order deterministic.
template <typename T>
using ParamStore = std::map<std::string, Tensor<T>>;

template <typename T>
using Gradients = std::map<std::string, Tensor<T>>;

template <typename T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;

  Graph<T>& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  const Tensor<T>& value() const { return graph_->value(id_); }
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph<T>;
  Var(Graph<T>* graph, int id) : graph_(graph), id_(id) {}

  Graph<T>* graph_ = nullptr;
  int id_ = -1;
};

// Tape for reverse-mode differentiation. Operations append nodes in
// evaluation order, so node ids are already a topological order.
template <typename T>
class Graph {
 public:
  // Receives the gradient of the node's output and accumulates into the
  // gradient buffers of its inputs via Graph::GradBuffer.
  using BackwardFn = std::function<void(Graph& graph, const Tensor<T>& out_grad)>;

  Graph() = default;
  explicit Graph(const ParamStore<T>& params) : params_(&params) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> Constant(Tensor<T> value);

  // Leaf bound to a named entry of the parameter store. Repeated calls with
  // the same name return the same node.
  Var<T> Param(const std::string& name);

  // Appends an operation result. `inputs` are the node ids the backward
  // function may write gradients to. Throws NumericError if the value is not
  // finite.
  Var<T> Record(Tensor<T> value, std::vector<int> inputs, BackwardFn backward,
                const char* op_name);

  const Tensor<T>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Zero-initialized on first access, shaped like the node's value.
  Tensor<T>& GradBuffer(int id);

  // Gradients of a scalar loss for every entry of the parameter store.
  // Parameters the loss does not depend on receive zeros.
  Gradients<T> Backward(Var<T> loss);

  // Zero gradient for every entry of the parameter store.
  Gradients<T> ZeroGradients() const;

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    std::string param_name;
  };

  const ParamStore<T>* params_ = nullptr;
  // deque keeps references to earlier node values valid while appending.
  std::deque<Node> nodes_;
  std::map<std::string, int> param_nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace capsed

#endif  // CAPSED_AUTODIFF_H_
