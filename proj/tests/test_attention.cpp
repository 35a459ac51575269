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

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "loza/attention/attention.hpp"
#include "loza/attention/mla.hpp"
#include "loza/attention/pattern.hpp"
#include "loza/errors.hpp"
#include "loza/numerics/ops.hpp"
#include "support/gradcheck.hpp"

namespace loza::attn {
namespace {

using loza::testing::grad_check;
using loza::testing::random_tensor;
using loza::testing::weighted_sum;
using num::Graph;
using num::Tensor;

std::set<std::size_t> visible(const AttnMask& m, std::size_t i) {
  std::set<std::size_t> out;
  for (std::size_t j = 0; j < m.seq_len(); ++j)
    if (m.allowed(i, j)) out.insert(j);
  return out;
}

// Direct per-position loop, written independently of the library kernels.
Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                       const std::function<bool(std::size_t, std::size_t)>& allowed) {
  const std::size_t n = q.shape[0], h = q.shape[1], d = q.shape[2];
  Tensor out({n, h, d});
  for (std::size_t hh = 0; hh < h; ++hh) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> w(n, 0.0);
      double mx = -1e300;
      for (std::size_t j = 0; j <= i; ++j) {
        if (!allowed(i, j)) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += q.data[(i * h + hh) * d + c] * k.data[(j * h + hh) * d + c];
        w[j] = s / std::sqrt(double(d));
        mx = std::max(mx, w[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        w[j] = allowed(i, j) ? std::exp(w[j] - mx) : 0.0;
        z += w[j];
      }
      for (std::size_t j = 0; j <= i; ++j)
        for (std::size_t c = 0; c < d; ++c) out.data[(i * h + hh) * d + c] += w[j] / z * v.data[(j * h + hh) * d + c];
    }
  }
  return out;
}

bool formula(std::size_t i, std::size_t j, const SparsePattern& p) {
  return j <= i && (j / p.block_size < p.sink_blocks || i / p.block_size - j / p.block_size < p.local_blocks);
}

TEST(SparsePatternTest, WindowAndValidation) {
  EXPECT_EQ((SparsePattern{1, 7, 128}.window_tokens()), 1024u);
  EXPECT_THROW((SparsePattern{1, 0, 4}.validate()), ContractError);
  EXPECT_THROW((SparsePattern{1, 1, 0}.validate()), ContractError);
}

TEST(MaskTest, HandEnumeratedExample) {
  const AttnMask m = build_streaming_mask(6, {1, 1, 2});
  EXPECT_EQ(visible(m, 4), (std::set<std::size_t>{0, 1, 4}));
  EXPECT_EQ(visible(m, 5), (std::set<std::size_t>{0, 1, 4, 5}));
  EXPECT_EQ(visible(m, 3), (std::set<std::size_t>{0, 1, 2, 3}));
}

TEST(MaskTest, SinglePartialBlockIsDenseCausal) {
  const AttnMask m = build_streaming_mask(3, {0, 1, 4});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m.allowed(i, j), j <= i);
}

TEST(MaskTest, WindowCoveringSequenceIsDenseCausal) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    const SparsePattern p{rng() % 3, 1 + rng() % 3, 1 + rng() % 5};
    const std::size_t n = 1 + rng() % p.window_tokens();
    const auto dense = build_streaming_mask(n, p).dense();
    const auto causal = AttnMask::causal(n).dense();
    EXPECT_EQ(dense, causal);
  }
}

TEST(MaskTest, MatchesFormulaAndIsCausalWithSelf) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const SparsePattern p{rng() % 4, 1 + rng() % 4, 1 + rng() % 6};
    const std::size_t n = 1 + rng() % 80;
    const AttnMask m = build_streaming_mask(n, p);
    const auto dense = m.dense();
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_TRUE(m.allowed(i, i));
      std::size_t count = 0;
      for (std::size_t j = 0; j < n; ++j) {
        ASSERT_EQ(m.allowed(i, j), formula(i, j, p));
        ASSERT_EQ(dense[i * n + j] != 0, formula(i, j, p));
        count += formula(i, j, p);
      }
      EXPECT_EQ(m.allowed_count(i), count);
    }
  }
}

TEST(MaskTest, RangesAreDisjointAscending) {
  const SparsePattern p{2, 2, 3};
  for (std::size_t i = 0; i < 40; ++i) {
    const KeyRanges r = streaming_key_ranges(i, p);
    ASSERT_GE(r.count, 1u);
    EXPECT_EQ(r.items().back().end, i + 1);
    if (r.count == 2) {
      EXPECT_LT(r.ranges[0].end, r.ranges[1].begin);
      EXPECT_EQ(r.ranges[0].begin, 0u);
    }
  }
}

class AttentionTest : public ::testing::Test {
 protected:
  std::mt19937_64 rng{17};
  Tensor rand(std::size_t n, std::size_t h, std::size_t d) { return random_tensor({n, h, d}, rng); }
};

TEST_F(AttentionTest, SingleTokenReturnsV) {
  Graph g;
  Tensor q = rand(1, 2, 3), k = rand(1, 2, 3), v = rand(1, 2, 3);
  EXPECT_EQ(full_attention(g.constant(q), g.constant(k), g.constant(v)).value().data, v.data);
}

TEST_F(AttentionTest, ZeroQueriesAverageValues) {
  Graph g;
  Tensor q({2, 1, 2}), k = rand(2, 1, 2), v = rand(2, 1, 2);
  const auto o = full_attention(g.constant(q), g.constant(k), g.constant(v)).value().data;
  EXPECT_NEAR(o[2], (v.data[0] + v.data[2]) / 2, 1e-15);
  EXPECT_NEAR(o[3], (v.data[1] + v.data[3]) / 2, 1e-15);
}

TEST_F(AttentionTest, FullMatchesNaiveLoop) {
  Tensor q = rand(8, 2, 4), k = rand(8, 2, 4), v = rand(8, 2, 4);
  const Tensor expect = naive_attention(q, k, v, [](auto, auto) { return true; });
  for (AttentionPath path : {AttentionPath::kEfficient, AttentionPath::kReference}) {
    Graph g;
    EXPECT_LT(num::max_abs_diff(full_attention(g.constant(q), g.constant(k), g.constant(v), path).value(), expect),
              1e-12);
  }
}

TEST_F(AttentionTest, SparseMatchesNaiveLoopAndReference) {
  for (int trial = 0; trial < 10; ++trial) {
    const SparsePattern p{rng() % 3, 1 + rng() % 3, 1 + rng() % 4};
    const std::size_t n = 1 + rng() % 40;
    Tensor q = rand(n, 2, 3), k = rand(n, 2, 3), v = rand(n, 2, 3);
    const Tensor expect = naive_attention(q, k, v, [&](auto i, auto j) { return formula(i, j, p); });
    Graph g;
    Var qv = g.constant(q), kv = g.constant(k), vv = g.constant(v);
    const Tensor fast = streaming_sparse_attention(qv, kv, vv, p).value();
    const Tensor ref = streaming_sparse_attention(qv, kv, vv, p, AttentionPath::kReference).value();
    EXPECT_LT(num::max_abs_diff(fast, expect), 1e-12);
    EXPECT_LT(num::max_abs_diff(fast, ref), 1e-12);
  }
}

TEST_F(AttentionTest, SparseEqualsFullInsideWindow) {
  const SparsePattern p{1, 2, 4};
  Tensor q = rand(12, 2, 3), k = rand(12, 2, 3), v = rand(12, 2, 3);
  Graph g;
  Var qv = g.constant(q), kv = g.constant(k), vv = g.constant(v);
  EXPECT_LT(num::max_abs_diff(full_attention(qv, kv, vv).value(), streaming_sparse_attention(qv, kv, vv, p).value()),
            1e-12);
}

TEST_F(AttentionTest, SparseOutputIgnoresMaskedKeys) {
  const SparsePattern p{1, 1, 2};
  Tensor q = rand(6, 1, 3), k = rand(6, 1, 3), v = rand(6, 1, 3);
  Graph g;
  const Tensor base = streaming_sparse_attention(g.constant(q), g.constant(k), g.constant(v), p).value();
  for (std::size_t c = 0; c < 3; ++c) {
    k.data[2 * 3 + c] += 5.0;
    v.data[3 * 3 + c] -= 4.0;
  }
  const Tensor moved = streaming_sparse_attention(g.constant(q), g.constant(k), g.constant(v), p).value();
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(base.data[4 * 3 + c], moved.data[4 * 3 + c]);
  EXPECT_NE(base.data[3 * 3], moved.data[3 * 3]);
}

TEST_F(AttentionTest, WindowOfOneReturnsV) {
  Tensor q = rand(7, 2, 3), k = rand(7, 2, 3), v = rand(7, 2, 3);
  Graph g;
  EXPECT_EQ(streaming_sparse_attention(g.constant(q), g.constant(k), g.constant(v), {0, 1, 1}).value().data, v.data);
}

TEST_F(AttentionTest, CausalityAndLocalityUnderPerturbation) {
  const SparsePattern p{1, 2, 3};
  const std::size_t n = 20;
  Tensor q = rand(n, 2, 2), k = rand(n, 2, 2), v = rand(n, 2, 2);
  const AttnMask mask = build_streaming_mask(n, p);
  auto run = [&](const Tensor& kk, const Tensor& vv, bool sparse) {
    Graph g;
    return sparse ? streaming_sparse_attention(g.constant(q), g.constant(kk), g.constant(vv), p).value()
                  : full_attention(g.constant(q), g.constant(kk), g.constant(vv)).value();
  };
  for (std::size_t j = 0; j < n; ++j) {
    Tensor k2 = k, v2 = v;
    for (std::size_t c = 0; c < 4; ++c) {
      k2.data[j * 4 + c] += 1.5;
      v2.data[j * 4 + c] -= 2.5;
    }
    for (bool sparse : {false, true}) {
      const Tensor a = run(k, v, sparse), b = run(k2, v2, sparse);
      for (std::size_t i = 0; i < n; ++i) {
        const bool must_hold = j > i || (sparse && !mask.allowed(i, j));
        if (!must_hold) continue;
        for (std::size_t c = 0; c < 4; ++c) ASSERT_EQ(a.data[i * 4 + c], b.data[i * 4 + c]) << i << "," << j;
      }
    }
  }
}

TEST_F(AttentionTest, EfficientAndReferenceGradientsAgree) {
  const SparsePattern p{1, 1, 2};
  Tensor q = rand(7, 2, 3), k = rand(7, 2, 3), v = rand(7, 2, 3), probe = rand(7, 2, 3);
  std::vector<std::vector<double>> grads[2];
  for (int path = 0; path < 2; ++path) {
    for (Tensor* t : {&q, &k, &v}) t->requires_grad = true;
    Graph g;
    Var out = streaming_sparse_attention(g.parameter(q), g.parameter(k), g.parameter(v), p,
                                         path ? AttentionPath::kReference : AttentionPath::kEfficient);
    g.backward(weighted_sum(out, probe));
    for (Tensor* t : {&q, &k, &v}) grads[path].push_back(*g.grad_of(*t));
  }
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < grads[0][t].size(); ++i) EXPECT_NEAR(grads[0][t][i], grads[1][t][i], 1e-12);
}

TEST_F(AttentionTest, BlendEndpointsAreExact) {
  const SparsePattern p{1, 1, 2};
  Tensor q = rand(9, 2, 3), k = rand(9, 2, 3), v = rand(9, 2, 3);
  Graph g;
  Var qv = g.constant(q), kv = g.constant(k), vv = g.constant(v);
  const Tensor full = full_attention(qv, kv, vv).value();
  const Tensor sparse = streaming_sparse_attention(qv, kv, vv, p).value();
  EXPECT_EQ(blended_attention(qv, kv, vv, p, g.constant(Tensor::scalar(1.0))).value().data, full.data);
  EXPECT_EQ(blended_attention(qv, kv, vv, p, g.constant(Tensor::scalar(0.0))).value().data, sparse.data);
  EXPECT_THROW(blended_attention(qv, kv, vv, p, g.constant(Tensor::scalar(1.5))), ContractError);
  EXPECT_THROW(blended_attention(qv, kv, vv, p, g.constant(Tensor::scalar(-0.1))), ContractError);

  const SparsePattern wide{1, 4, 4};
  EXPECT_LT(num::max_abs_diff(blended_attention(qv, kv, vv, wide, g.constant(Tensor::scalar(0.5))).value(), full),
            1e-12);
}

TEST_F(AttentionTest, BlendGradientInAlpha) {
  const SparsePattern p{1, 1, 2};
  Tensor q = rand(9, 2, 3), k = rand(9, 2, 3), v = rand(9, 2, 3), probe = rand(9, 2, 3);
  Tensor alpha = Tensor::scalar(0.3);
  const auto r = grad_check({&alpha}, [&](Graph& g, const std::vector<Var>& in) {
    return weighted_sum(blended_attention(g.constant(q), g.constant(k), g.constant(v), p, in[0]), probe);
  });
  EXPECT_LT(r.rel_err, 1e-4);
}

TEST_F(AttentionTest, ShapeMismatchIsRejected) {
  Graph g;
  EXPECT_THROW(full_attention(g.constant(rand(3, 2, 2)), g.constant(rand(4, 2, 2)), g.constant(rand(3, 2, 2))),
               DimensionError);
}

TEST(MlaLiteTest, IdentityProjectionsPassHiddenThrough) {
  std::mt19937_64 rng(2);
  Tensor h = random_tensor({5, 4}, rng);
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  MlaLiteWeights w{eye, eye, eye, eye, 2, 2};
  Graph g;
  const Qkv qkv = mla_lite_project(g.constant(h), w);
  EXPECT_EQ(qkv.k.value().data, h.data);
  EXPECT_EQ(qkv.v.value().data, h.data);
  EXPECT_EQ(qkv.k.shape(), (num::Shape{5, 2, 2}));
}

TEST(MlaLiteTest, LatentBoundsRank) {
  std::mt19937_64 rng(6);
  MlaLiteWeights w{random_tensor({4, 2}, rng), random_tensor({2, 4}, rng), random_tensor({2, 4}, rng),
                   random_tensor({4, 4}, rng), 2, 2};
  Tensor h = random_tensor({8, 4}, rng);
  Graph g;
  const Qkv qkv = mla_lite_project(g.constant(h), w);
  for (Var x : {qkv.k, qkv.v}) {
    Eigen::MatrixXd m(8, 4);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t c = 0; c < 4; ++c) m(i, c) = x.value().data[i * 4 + c];
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
    EXPECT_GT(sv(1), 1e-6);
    EXPECT_LT(sv(2), 1e-12 * sv(0));
    EXPECT_LT(sv(3), 1e-12 * sv(0));
  }
  Eigen::MatrixXd qm(8, 4);
  for (std::size_t i = 0; i < 32; ++i) qm(i / 4, i % 4) = qkv.q.value().data[i];
  EXPECT_GT(Eigen::JacobiSVD<Eigen::MatrixXd>(qm).singularValues()(3), 1e-6) << "Q is not latent-bound";
}

TEST(MlaLiteTest, InvalidWeightsAreRejected) {
  MlaLiteWeights w{Tensor({4, 5}), Tensor({5, 4}), Tensor({5, 4}), Tensor({4, 4}), 2, 2};
  EXPECT_THROW(w.validate(), DimensionError);
}

TEST(MlaLiteTest, ProjectionGradients) {
  std::mt19937_64 rng(12);
  Tensor h = random_tensor({5, 4}, rng), wd = random_tensor({4, 2}, rng), wk = random_tensor({2, 4}, rng),
         wv = random_tensor({2, 4}, rng), wq = random_tensor({4, 4}, rng);
  Tensor pq = random_tensor({5, 2, 2}, rng), pk = random_tensor({5, 2, 2}, rng), pv = random_tensor({5, 2, 2}, rng);
  const auto r = grad_check({&h, &wd, &wk, &wv, &wq}, [&](Graph&, const std::vector<Var>& in) {
    const Qkv qkv = mla_lite_project(in[0], in[1], in[2], in[3], in[4], 2, 2);
    return num::add(num::add(weighted_sum(qkv.q, pq), weighted_sum(qkv.k, pk)), weighted_sum(qkv.v, pv));
  });
  EXPECT_LT(r.rel_err, 1e-4);
}

}  // namespace
}  // namespace loza::attn
