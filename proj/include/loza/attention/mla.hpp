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

#include <cstddef>

#include "loza/numerics/graph.hpp"

namespace loza::attn {

using num::Tensor;
using num::Var;

// Simplified multi-head latent attention projections: keys and values are
// decoded from one shared low-rank latent of the hidden state. No decoupled
// rotary part.
struct MlaLiteWeights {
  Tensor w_down;  // d_model x latent
  Tensor w_uk;    // latent x (heads * head_dim)
  Tensor w_uv;    // latent x (heads * head_dim)
  Tensor w_q;     // d_model x (heads * head_dim)
  std::size_t n_heads = 1;
  std::size_t head_dim = 1;

  // Throws DimensionError on inconsistent shapes or latent > d_model.
  void validate() const;
};

struct Qkv {
  Var q, k, v;  // each {n, heads, head_dim}
};

// c = h W_down; K = c W_uk; V = c W_uv; Q = h W_q, reshaped per head.
Qkv mla_lite_project(Var h, Var w_down, Var w_uk, Var w_uv, Var w_q, std::size_t n_heads,
                     std::size_t head_dim);

// Binds w's tensors as graph parameters.
Qkv mla_lite_project(Var h, const MlaLiteWeights& w);

}  // namespace loza::attn
