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

#include <cstdint>
#include <span>

#include "loza/numerics/graph.hpp"

// Differentiable primitives. Shapes are explicit: the only broadcasting is
// scalar-times-tensor in scale().
namespace loza::num {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sigmoid(Var a);
Var gelu(Var a);
Var sum(Var a);
Var reshape(Var a, Shape shape);

// Rows [begin, end) of a 2-D tensor.
Var slice_rows(Var a, std::size_t begin, std::size_t end);

// Column block h of an {n, heads, d} tensor, as n x d.
Var head_slice(Var a, std::size_t head);
// Inverse of head_slice over all heads: n x d parts -> {n, heads, d}.
Var concat_heads(std::span<const Var> parts);

// Per-row RMS normalization: y = x / sqrt(mean(x^2) + eps) * gain.
Var rmsnorm(Var x, Var gain, double eps = 1e-8);

// table[V x d], ids -> [n x d]. ids must be < V.
Var embedding(Var table, std::span<const int> ids);

// Row-wise softmax. mask (optional) has x.size() entries, nonzero = allowed.
// Masked entries are exactly 0. A row with no allowed entry raises
// DegenerateRowError.
Var softmax_rows(Var x, std::span<const std::uint8_t> mask = {});

// Mean over rows of -log softmax(logits)[row, target].
Var cross_entropy(Var logits, std::span<const int> targets);

// Mean squared error against a constant target.
Var mse(Var a, const Tensor& target);

}  // namespace loza::num
