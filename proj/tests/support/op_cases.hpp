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

// One gradient-check case per differentiable primitive. Shared by the unit
// tests and the acceptance runner.

#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "loza/attention/attention.hpp"
#include "loza/attention/mla.hpp"

namespace loza::testing {

struct OpCase {
  std::string name;
  GradCheck result;
};

inline std::vector<OpCase> run_op_gradient_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<OpCase> out;
  auto run = [&](const std::string& name, std::vector<Tensor> tensors, num::Shape out_shape,
                 std::function<Var(Graph&, const std::vector<Var>&)> op) {
    Tensor probe = random_tensor(std::move(out_shape), rng);
    std::vector<Tensor*> ptrs;
    for (Tensor& t : tensors) ptrs.push_back(&t);
    out.push_back({name, grad_check(ptrs, [&](Graph& g, const std::vector<Var>& v) {
                     Var y = op(g, v);
                     return y.value().is_scalar() && probe.size() == 1 ? y : weighted_sum(y, probe);
                   })});
  };

  run("matmul", {random_tensor({5, 4}, rng), random_tensor({4, 3}, rng)}, {5, 3},
      [](Graph&, const std::vector<Var>& v) { return num::matmul(v[0], v[1]); });
  run("transpose", {random_tensor({3, 4}, rng)}, {4, 3},
      [](Graph&, const std::vector<Var>& v) { return num::transpose(v[0]); });
  run("add", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, {3, 4},
      [](Graph&, const std::vector<Var>& v) { return num::add(v[0], v[1]); });
  run("sub", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, {3, 4},
      [](Graph&, const std::vector<Var>& v) { return num::sub(v[0], v[1]); });
  run("mul", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, {3, 4},
      [](Graph&, const std::vector<Var>& v) { return num::mul(v[0], v[1]); });
  run("scale", {random_tensor({6}, rng)}, {6},
      [](Graph&, const std::vector<Var>& v) { return num::scale(v[0], -1.7); });
  run("sigmoid", {random_tensor({7}, rng, 2.0)}, {7},
      [](Graph&, const std::vector<Var>& v) { return num::sigmoid(v[0]); });
  run("gelu", {random_tensor({7}, rng, 2.0)}, {7},
      [](Graph&, const std::vector<Var>& v) { return num::gelu(v[0]); });
  run("sum", {random_tensor({2, 3}, rng)}, {1},
      [](Graph&, const std::vector<Var>& v) { return num::sum(v[0]); });
  run("reshape", {random_tensor({2, 6}, rng)}, {3, 4},
      [](Graph&, const std::vector<Var>& v) { return num::reshape(v[0], {3, 4}); });
  run("slice_rows", {random_tensor({5, 3}, rng)}, {2, 3},
      [](Graph&, const std::vector<Var>& v) { return num::slice_rows(v[0], 1, 3); });
  run("head_slice", {random_tensor({4, 3, 2}, rng)}, {4, 2},
      [](Graph&, const std::vector<Var>& v) { return num::head_slice(v[0], 1); });
  run("concat_heads", {random_tensor({4, 2}, rng), random_tensor({4, 2}, rng)}, {4, 2, 2},
      [](Graph&, const std::vector<Var>& v) { return num::concat_heads(v); });
  run("rmsnorm", {random_tensor({3, 5}, rng), random_tensor({5}, rng)}, {3, 5},
      [](Graph&, const std::vector<Var>& v) { return num::rmsnorm(v[0], v[1]); });
  run("embedding", {random_tensor({6, 3}, rng)}, {4, 3}, [](Graph&, const std::vector<Var>& v) {
    static const int ids[] = {2, 0, 2, 5};
    return num::embedding(v[0], ids);
  });
  run("softmax_rows", {random_tensor({3, 4}, rng, 2.0)}, {3, 4}, [](Graph&, const std::vector<Var>& v) {
    static const std::uint8_t mask[] = {1, 0, 1, 1, 1, 1, 0, 0, 0, 1, 1, 1};
    return num::softmax_rows(v[0], mask);
  });
  run("cross_entropy", {random_tensor({4, 6}, rng, 2.0)}, {1}, [](Graph&, const std::vector<Var>& v) {
    static const int targets[] = {1, 5, 0, 3};
    return num::cross_entropy(v[0], targets);
  });
  {
    Tensor target = random_tensor({3, 3}, rng);
    run("mse", {random_tensor({3, 3}, rng)}, {1},
        [target](Graph&, const std::vector<Var>& v) { return num::mse(v[0], target); });
  }
  run("full_attention", {random_tensor({6, 2, 3}, rng), random_tensor({6, 2, 3}, rng), random_tensor({6, 2, 3}, rng)},
      {6, 2, 3}, [](Graph&, const std::vector<Var>& v) { return attn::full_attention(v[0], v[1], v[2]); });
  run("streaming_sparse_attention",
      {random_tensor({9, 2, 3}, rng), random_tensor({9, 2, 3}, rng), random_tensor({9, 2, 3}, rng)}, {9, 2, 3},
      [](Graph&, const std::vector<Var>& v) {
        return attn::streaming_sparse_attention(v[0], v[1], v[2], attn::SparsePattern{1, 1, 2});
      });
  run("blended_attention",
      {random_tensor({9, 2, 3}, rng), random_tensor({9, 2, 3}, rng), random_tensor({9, 2, 3}, rng),
       random_tensor({1}, rng)},
      {9, 2, 3}, [](Graph&, const std::vector<Var>& v) {
        return attn::blended_attention(v[0], v[1], v[2], attn::SparsePattern{1, 1, 2}, num::sigmoid(v[3]));
      });
  run("mla_lite_project",
      {random_tensor({5, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2, 4}, rng), random_tensor({2, 4}, rng),
       random_tensor({4, 4}, rng)},
      {5, 2, 2}, [](Graph&, const std::vector<Var>& v) {
        const attn::Qkv qkv = attn::mla_lite_project(v[0], v[1], v[2], v[3], v[4], 2, 2);
        return num::add(num::add(qkv.q, qkv.k), qkv.v);
      });
  return out;
}

}  // namespace loza::testing
