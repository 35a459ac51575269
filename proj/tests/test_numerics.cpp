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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "loza/errors.hpp"
#include "loza/numerics/graph.hpp"
#include "loza/numerics/ops.hpp"
#include "loza/numerics/optim.hpp"
#include "support/gradcheck.hpp"
#include "support/op_cases.hpp"

namespace loza::num {
namespace {

using loza::testing::grad_check;
using loza::testing::random_tensor;
using loza::testing::weighted_sum;

TEST(TensorTest, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_FALSE(t.grad.has_value());
  t.zero_grad();
  EXPECT_FALSE(t.grad.has_value()) << "frozen tensors never get a grad buffer";
  t.requires_grad = true;
  t.zero_grad();
  ASSERT_TRUE(t.grad.has_value());
  EXPECT_EQ(t.grad->size(), 6u);
}

TEST(MatmulTest, IdentityAndDotProduct) {
  Graph g;
  Var eye = g.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var a = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(matmul(eye, a).value().data, (std::vector<double>{1, 2, 3, 4}));
  Var row = g.constant(Tensor({1, 2}, {1, 2}));
  Var col = g.constant(Tensor({2, 1}, {3, 4}));
  EXPECT_EQ(matmul(row, col).value().data, (std::vector<double>{11}));
}

TEST(MatmulTest, ShapeMismatchNamesBothShapes) {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.rfind("[2x3]"), msg.find("[2x3]")) << msg;
  }
}

TEST(MatmulTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  Tensor a = random_tensor({5, 4}, rng), b = random_tensor({4, 3}, rng), probe = random_tensor({5, 3}, rng);
  const auto r = grad_check({&a, &b}, [&](Graph&, const std::vector<Var>& v) {
    return weighted_sum(matmul(v[0], v[1]), probe);
  });
  EXPECT_LT(r.rel_err, 1e-6);
  EXPECT_EQ(r.checked, 32u);
}

TEST(SoftmaxTest, KnownValues) {
  Graph g;
  EXPECT_EQ(softmax_rows(g.constant(Tensor({1, 2}, {0, 0}))).value().data, (std::vector<double>{0.5, 0.5}));

  const std::uint8_t mask[] = {1, 0};
  const double neg_inf = -std::numeric_limits<double>::infinity();
  auto masked = softmax_rows(g.constant(Tensor({1, 2}, {5, neg_inf})), mask).value().data;
  EXPECT_EQ(masked, (std::vector<double>{1.0, 0.0}));

  auto y = softmax_rows(g.constant(Tensor({1, 3}, {1, 2, 3}))).value().data;
  EXPECT_NEAR(y[0], 0.09003, 1e-5);
  EXPECT_NEAR(y[1], 0.24473, 1e-5);
  EXPECT_NEAR(y[2], 0.66524, 1e-5);
}

TEST(SoftmaxTest, FullyMaskedRowIsAnError) {
  Graph g;
  const std::uint8_t mask[] = {1, 1, 0, 0};
  EXPECT_THROW(softmax_rows(g.constant(Tensor({2, 2}, {1, 2, 3, 4})), mask), DegenerateRowError);
}

TEST(SoftmaxTest, RowsSumToOneAndMaskedEntriesAreZero) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng() % 6, n = 1 + rng() % 9;
    Tensor x = random_tensor({m, n}, rng, 10.0);
    std::vector<std::uint8_t> mask(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) mask[i * n + j] = coin(rng);
      mask[i * n + rng() % n] = 1;
    }
    Graph g;
    const auto y = softmax_rows(g.constant(x), mask).value().data;
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[i * n + j]) EXPECT_EQ(y[i * n + j], 0.0);
        s += y[i * n + j];
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(BackwardTest, SumGivesOnes) {
  Tensor x({2, 3}, {1, -2, 3, 4, 5, -6});
  x.requires_grad = true;
  Graph g;
  g.backward(sum(g.parameter(x)));
  ASSERT_NE(g.grad_of(x), nullptr);
  EXPECT_EQ(*g.grad_of(x), std::vector<double>(6, 1.0));
}

TEST(BackwardTest, SquareGivesTwoX) {
  Tensor x({3}, {1, 2, 3});
  x.requires_grad = true;
  Graph g;
  Var v = g.parameter(x);
  g.backward(sum(mul(v, v)));
  EXPECT_EQ(*g.grad_of(x), (std::vector<double>{2, 4, 6}));
}

TEST(BackwardTest, NonScalarLossIsAContractError) {
  Graph g;
  Var v = g.variable(Tensor({2}, {1, 2}), true);
  EXPECT_THROW(g.backward(v), ContractError);
}

TEST(BackwardTest, FrozenTensorsGetNoGradient) {
  Tensor w({2, 2}, {1, 2, 3, 4});
  Tensor x({2, 2}, {1, 1, 1, 1});
  x.requires_grad = true;
  Graph g;
  g.backward(sum(matmul(g.parameter(x), g.parameter(w))));
  EXPECT_EQ(g.grad_of(w), nullptr);
  EXPECT_NE(g.grad_of(x), nullptr);
}

TEST(BackwardTest, GraphIsSingleUse) {
  Graph g;
  Var v = g.variable(Tensor::scalar(3.0), true);
  Var loss = mul(v, v);
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), ContractError);
}

TEST(BackwardTest, NodesAreTopologicallyOrdered) {
  Graph g;
  Var a = g.variable(Tensor({2}, {1, 2}), true);
  Var b = scale(a, 2.0);
  Var c = add(a, b);
  EXPECT_LT(a.id, b.id);
  EXPECT_LT(b.id, c.id);
  EXPECT_EQ(g.node_count(), 3u);
}

TEST(ElementwiseTest, Conventions) {
  Graph g;
  EXPECT_EQ(sigmoid(g.constant(Tensor::scalar(0.0))).value().item(), 0.5);
  for (double c : {0.5, 3.0, -7.0}) {
    Var x = g.constant(Tensor({1, 4}, std::vector<double>(4, c)));
    Var gain = g.constant(Tensor({4}, std::vector<double>(4, 1.0)));
    for (double y : rmsnorm(x, gain).value().data) EXPECT_NEAR(std::abs(y), 1.0, 1e-7);
  }
  const int ids[] = {0, 99};
  EXPECT_THROW(embedding(g.constant(Tensor({3, 2})), ids), ContractError);
  EXPECT_THROW(add(g.constant(Tensor({2})), g.constant(Tensor({3}))), DimensionError);
}

TEST(ElementwiseTest, CrossEntropyUniformAndGradient) {
  Graph g;
  const int targets[] = {0, 3, 2};
  EXPECT_NEAR(cross_entropy(g.constant(Tensor({3, 5})), targets).value().item(), std::log(5.0), 1e-15);

  std::mt19937_64 rng(3);
  Tensor logits = random_tensor({3, 5}, rng, 3.0);
  const auto r = grad_check({&logits}, [&](Graph&, const std::vector<Var>& v) { return cross_entropy(v[0], targets); });
  EXPECT_LT(r.rel_err, 1e-6);
}

TEST(GradientProperty, EveryPrimitiveMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& c : loza::testing::run_op_gradient_cases(seed)) {
      EXPECT_LT(c.result.rel_err, 1e-4) << c.name << " seed " << seed;
      EXPECT_GT(c.result.checked, 0u) << c.name;
    }
  }
}

TEST(DeterminismTest, SameInputsSameBits) {
  auto run = [] {
    std::mt19937_64 rng(99);
    Tensor a = random_tensor({4, 6}, rng), b = random_tensor({6, 3}, rng);
    a.requires_grad = b.requires_grad = true;
    Graph g;
    Var y = softmax_rows(matmul(g.parameter(a), g.parameter(b)));
    Var loss = sum(mul(y, y));
    g.backward(loss);
    std::vector<double> bits = y.value().data;
    bits.insert(bits.end(), g.grad_of(a)->begin(), g.grad_of(a)->end());
    bits.insert(bits.end(), g.grad_of(b)->begin(), g.grad_of(b)->end());
    return bits;
  };
  EXPECT_EQ(run(), run());
}

TEST(AdamTest, LeavesFrozenTensorsUntouchedAndMovesTrainable) {
  Tensor frozen({2}, {1.0, 2.0});
  Tensor live({2}, {1.0, 2.0});
  live.requires_grad = true;
  Adam opt({&frozen, &live}, {.lr = 0.1});
  opt.zero_grad();
  Graph g;
  g.backward(sum(mul(g.parameter(frozen), g.parameter(live))));
  live.grad = *g.grad_of(live);
  opt.step();
  EXPECT_EQ(frozen.data, (std::vector<double>{1.0, 2.0}));
  EXPECT_LT(live.data[0], 1.0);
  EXPECT_FALSE(frozen.grad.has_value());
}

}  // namespace
}  // namespace loza::num
