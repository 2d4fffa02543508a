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

#include "capsed/autodiff.h"

#include <stdexcept>

namespace capsed {

template <typename T>
Var<T> Graph<T>::Constant(Tensor<T> value) {
  CheckFinite(value, "constant");
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
Var<T> Graph<T>::Param(const std::string& name) {
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) {
    return Var<T>(this, it->second);
  }
  if (params_ == nullptr) throw std::out_of_range("graph has no parameter store");
  auto it = params_->find(name);
  if (it == params_->end()) throw std::out_of_range("unknown parameter '" + name + "'");
  CheckFinite(it->second, name.c_str());
  Node node;
  node.value = it->second;
  node.requires_grad = true;
  node.param_name = name;
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(name, id);
  return Var<T>(this, id);
}

template <typename T>
Var<T> Graph<T>::Record(Tensor<T> value, std::vector<int> inputs, BackwardFn backward,
                        const char* op_name) {
  CheckFinite(value, op_name);
  Node node;
  node.value = std::move(value);
  for (int id : inputs) node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
Tensor<T>& Graph<T>::GradBuffer(int id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor<T>(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

template <typename T>
Gradients<T> Graph<T>::Backward(Var<T> loss) {
  if (loss.value().size() != 1) {
    throw DimensionError("backward needs a scalar loss, got " +
                         ShapeToString(loss.shape()));
  }
  Gradients<T> grads = ZeroGradients();
  if (!nodes_[loss.id()].requires_grad) return grads;

  GradBuffer(loss.id())[0] = T(1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.has_grad || !node.backward) continue;
    // Closures only write to inputs, which have smaller ids.
    const Tensor<T> out_grad = std::move(node.grad);
    node.backward(*this, out_grad);
  }
  for (const auto& [name, id] : param_nodes_) {
    if (nodes_[id].has_grad) {
      CheckFinite(nodes_[id].grad, "backward");
      grads[name] = nodes_[id].grad;
    }
  }
  return grads;
}

template <typename T>
Gradients<T> Graph<T>::ZeroGradients() const {
  Gradients<T> grads;
  if (params_ == nullptr) return grads;
  for (const auto& [name, value] : *params_) grads.emplace(name, Tensor<T>(value.shape()));
  return grads;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace capsed
