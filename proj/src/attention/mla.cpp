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

#include "loza/attention/mla.hpp"

#include "loza/errors.hpp"
#include "loza/numerics/ops.hpp"

namespace loza::attn {

void MlaLiteWeights::validate() const {
  const std::size_t width = n_heads * head_dim;
  if (w_down.rank() != 2 || w_uk.rank() != 2 || w_uv.rank() != 2 || w_q.rank() != 2) {
    throw DimensionError("MLA-lite weights must be matrices");
  }
  const std::size_t d_model = w_down.shape[0], latent = w_down.shape[1];
  if (latent > d_model) {
    throw DimensionError("MLA-lite latent " + std::to_string(latent) + " exceeds d_model " +
                         std::to_string(d_model));
  }
  if (w_uk.shape != num::Shape{latent, width} || w_uv.shape != num::Shape{latent, width} ||
      w_q.shape != num::Shape{d_model, width}) {
    throw DimensionError("MLA-lite weights: down " + num::to_string(w_down.shape) + ", uk " +
                         num::to_string(w_uk.shape) + ", uv " + num::to_string(w_uv.shape) + ", q " +
                         num::to_string(w_q.shape) + " inconsistent with " + std::to_string(n_heads) +
                         " heads of " + std::to_string(head_dim));
  }
}

Qkv mla_lite_project(Var h, Var w_down, Var w_uk, Var w_uv, Var w_q, std::size_t n_heads,
                     std::size_t head_dim) {
  const std::size_t n = h.shape().at(0);
  const num::Shape per_head{n, n_heads, head_dim};
  Var latent = num::matmul(h, w_down);
  Var k = num::reshape(num::matmul(latent, w_uk), per_head);
  Var v = num::reshape(num::matmul(latent, w_uv), per_head);
  Var q = num::reshape(num::matmul(h, w_q), per_head);
  return {q, k, v};
}

Qkv mla_lite_project(Var h, const MlaLiteWeights& w) {
  w.validate();
  num::Graph& g = *h.graph;
  return mla_lite_project(h, g.parameter(w.w_down), g.parameter(w.w_uk), g.parameter(w.w_uv),
                          g.parameter(w.w_q), w.n_heads, w.head_dim);
}

}  // namespace loza::attn
