/* Copyright 2026 The LoZA Lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "loza/numerics/graph.hpp"

#include "loza/errors.hpp"

namespace loza::num {

const Tensor& Var::value() const {
  if (graph == nullptr) throw ContractError("unbound Var");
  return graph->value(*this);
}

void Graph::check(Var v) const {
  if (v.graph != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractError("Var does not belong to this graph");
  }
}

Var Graph::constant(Tensor t) {
  Node n;
  n.owned = std::move(t);
  n.owned.requires_grad = false;
  n.owned.grad.reset();
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::variable(Tensor t, bool requires_grad) {
  Node n;
  n.owned = std::move(t);
  n.owned.requires_grad = requires_grad;
  n.owned.grad.reset();
  n.needs_grad = grad_enabled_ && requires_grad;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::parameter(const Tensor& t) {
  if (auto it = bound_.find(&t); it != bound_.end()) return {this, it->second};
  Node n;
  n.external = &t;
  n.needs_grad = grad_enabled_ && t.requires_grad;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  bound_.emplace(&t, id);
  return {this, id};
}

Var Graph::record(Tensor out, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.owned = std::move(out);
  n.inputs.reserve(inputs.size());
  for (Var v : inputs) {
    check(v);
    n.inputs.push_back(v.id);
    n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::value(Var v) const {
  check(v);
  return nodes_[v.id].value();
}

bool Graph::needs_grad(Var v) const {
  check(v);
  return nodes_[v.id].needs_grad;
}

std::vector<double>& Graph::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value().size(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  check(loss);
  if (consumed_) throw ContractError("backward() called twice on one graph");
  if (!nodes_[loss.id].value().is_scalar()) {
    throw ContractError("backward() needs a scalar loss, got " +
                        to_string(nodes_[loss.id].value().shape));
  }
  consumed_ = true;
  if (!nodes_[loss.id].needs_grad) return;
  grad_buffer(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
    BackwardContext ctx(*this, id);
    n.backward(ctx);
  }
}

const std::vector<double>* Graph::grad(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  return n.grad.empty() ? nullptr : &n.grad;
}

const std::vector<double>* Graph::grad_of(const Tensor& bound) const {
  auto it = bound_.find(&bound);
  if (it == bound_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  return n.grad.empty() ? nullptr : &n.grad;
}

std::span<const double> BackwardContext::grad_out() const { return graph_.nodes_[node_].grad; }

const Tensor& BackwardContext::out() const { return graph_.nodes_[node_].value(); }

const Tensor& BackwardContext::in(std::size_t k) const {
  return graph_.nodes_[graph_.nodes_[node_].inputs.at(k)].value();
}

bool BackwardContext::needs(std::size_t k) const {
  return graph_.nodes_[graph_.nodes_[node_].inputs.at(k)].needs_grad;
}

std::span<double> BackwardContext::grad_in(std::size_t k) {
  const int id = graph_.nodes_[node_].inputs.at(k);
  if (!graph_.nodes_[id].needs_grad) return {};
  return graph_.grad_buffer(id);
}

}  // namespace loza::num
