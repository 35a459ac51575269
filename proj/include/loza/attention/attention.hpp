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

#include "loza/attention/pattern.hpp"
#include "loza/numerics/graph.hpp"

namespace loza::attn {

using num::Var;

// kEfficient only touches the key ranges each query may see. kReference
// builds dense n x n scores per head and applies the mask through
// softmax_rows; it is slow and exists as an oracle.
enum class AttentionPath { kEfficient, kReference };

// Q, K, V are {n, heads, head_dim}; scores are scaled by 1/sqrt(head_dim).
Var masked_attention(Var q, Var k, Var v, const AttnMask& mask,
                     AttentionPath path = AttentionPath::kEfficient);

Var full_attention(Var q, Var k, Var v, AttentionPath path = AttentionPath::kEfficient);

Var streaming_sparse_attention(Var q, Var k, Var v, const SparsePattern& p,
                               AttentionPath path = AttentionPath::kEfficient);

// alpha * full + (1 - alpha) * sparse, elementwise. alpha is a scalar node
// and receives a gradient. Throws ContractError if alpha is outside [0, 1].
Var blend(Var full, Var sparse, Var alpha);

Var blended_attention(Var q, Var k, Var v, const SparsePattern& p, Var alpha);

}  // namespace loza::attn
