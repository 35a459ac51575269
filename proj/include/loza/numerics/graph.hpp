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

#pragma once

#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "loza/numerics/tensor.hpp"

namespace loza::num {

class Graph;

// Handle to a node recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
};

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

// Tape for reverse-mode differentiation. Nodes are appended in evaluation
// order, so inputs always precede their consumers. A graph supports exactly
// one backward pass and is discarded afterwards.
class Graph {
 public:
  Graph() = default;
  // A graph built with grad_enabled == false records no backward rules,
  // whatever the leaves' requires_grad flags say.
  explicit Graph(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  // Leaf owned by the graph; its gradient stays readable through grad().
  Var variable(Tensor t, bool requires_grad);
  // Leaf bound to an external tensor, which must outlive the graph. Binding
  // the same tensor twice returns the same node. Gradients are recorded only
  // when t.requires_grad is set.
  Var parameter(const Tensor& t);

  // Appends an op output. The backward rule is kept only when some input
  // needs a gradient.
  Var record(Tensor out, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const;

  void backward(Var loss);

  // nullptr when the node received no gradient.
  const std::vector<double>* grad(Var v) const;
  const std::vector<double>* grad_of(const Tensor& bound) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend class BackwardContext;

  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    std::vector<int> inputs;
    bool needs_grad = false;
    BackwardFn backward;
    std::vector<double> grad;

    const Tensor& value() const { return external != nullptr ? *external : owned; }
  };

  void check(Var v) const;
  std::vector<double>& grad_buffer(int id);

  std::deque<Node> nodes_;  // deque: recorded values keep stable addresses
  std::unordered_map<const Tensor*, int> bound_;
  bool consumed_ = false;
  bool grad_enabled_ = true;
};

// View handed to a backward rule: the output gradient plus lazily allocated
// input gradient buffers.
class BackwardContext {
 public:
  BackwardContext(Graph& g, int node) : graph_(g), node_(node) {}

  std::span<const double> grad_out() const;
  const Tensor& out() const;
  const Tensor& in(std::size_t k) const;
  bool needs(std::size_t k) const;
  // Zero-initialized on first access; empty when input k needs no gradient.
  std::span<double> grad_in(std::size_t k);

 private:
  Graph& graph_;
  int node_;
};

}  // namespace loza::num
