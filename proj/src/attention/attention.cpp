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

#include "loza/attention/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "loza/errors.hpp"
#include "loza/numerics/ops.hpp"

namespace loza::attn {

using num::BackwardContext;
using num::Graph;
using num::Tensor;

namespace {

struct Dims {
  std::size_t n, h, d;
};

Dims check_qkv(Var q, Var k, Var v) {
  if (q.graph == nullptr || q.graph != k.graph || q.graph != v.graph) {
    throw ContractError("attention operands must share one graph");
  }
  const auto& qs = q.shape();
  if (qs.size() != 3) throw DimensionError("attention: Q must be {n, heads, dim}, got " + num::to_string(qs));
  if (k.shape() != qs || v.shape() != qs) {
    throw DimensionError("attention: Q " + num::to_string(qs) + ", K " + num::to_string(k.shape()) +
                         ", V " + num::to_string(v.shape()) + " disagree");
  }
  return {qs[0], qs[1], qs[2]};
}

Var efficient_attention(Var q, Var k, Var v, const AttnMask& mask, Dims dims) {
  const auto [n, h, d] = dims;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const auto& Q = q.value().data;
  const auto& K = k.value().data;
  const auto& V = v.value().data;

  // Probabilities over visible keys, packed per (query, head).
  std::vector<std::size_t> offsets(n * h + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = mask.allowed_count(i);
    for (std::size_t hh = 0; hh < h; ++hh) offsets[i * h + hh + 1] = offsets[i * h + hh] + c;
  }
  std::vector<double> probs(offsets.back());
  Tensor out({n, h, d});

  for (std::size_t i = 0; i < n; ++i) {
    const KeyRanges kr = mask.key_ranges(i);
    for (std::size_t hh = 0; hh < h; ++hh) {
      const double* qi = &Q[(i * h + hh) * d];
      double* p = &probs[offsets[i * h + hh]];
      double mx = -std::numeric_limits<double>::infinity();
      std::size_t t = 0;
      for (const KeyRange& r : kr.items()) {
        for (std::size_t j = r.begin; j < r.end; ++j, ++t) {
          const double* kj = &K[(j * h + hh) * d];
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
          p[t] = s * scale;
          mx = std::max(mx, p[t]);
        }
      }
      double z = 0.0;
      for (std::size_t u = 0; u < t; ++u) {
        p[u] = std::exp(p[u] - mx);
        z += p[u];
      }
      for (std::size_t u = 0; u < t; ++u) p[u] /= z;
      double* oi = &out.data[(i * h + hh) * d];
      t = 0;
      for (const KeyRange& r : kr.items()) {
        for (std::size_t j = r.begin; j < r.end; ++j, ++t) {
          const double* vj = &V[(j * h + hh) * d];
          for (std::size_t c = 0; c < d; ++c) oi[c] += p[t] * vj[c];
        }
      }
    }
  }

  const Var ins[] = {q, k, v};
  return q.graph->record(
      std::move(out), ins,
      [mask, n, h, d, scale, offsets = std::move(offsets), probs = std::move(probs)](BackwardContext& ctx) {
        const auto dO = ctx.grad_out();
        const auto& Q = ctx.in(0).data;
        const auto& K = ctx.in(1).data;
        const auto& V = ctx.in(2).data;
        auto dQ = ctx.grad_in(0);
        auto dK = ctx.grad_in(1);
        auto dV = ctx.grad_in(2);
        std::vector<double> ds;
        for (std::size_t i = 0; i < n; ++i) {
          const KeyRanges kr = mask.key_ranges(i);
          for (std::size_t hh = 0; hh < h; ++hh) {
            const double* p = &probs[offsets[i * h + hh]];
            const std::size_t cnt = offsets[i * h + hh + 1] - offsets[i * h + hh];
            const double* doi = &dO[(i * h + hh) * d];
            ds.assign(cnt, 0.0);
            double dot = 0.0;
            std::size_t t = 0;
            for (const KeyRange& r : kr.items()) {
              for (std::size_t j = r.begin; j < r.end; ++j, ++t) {
                const double* vj = &V[(j * h + hh) * d];
                double dp = 0.0;
                for (std::size_t c = 0; c < d; ++c) dp += doi[c] * vj[c];
                ds[t] = dp;
                dot += dp * p[t];
                if (!dV.empty()) {
                  double* dvj = &dV[(j * h + hh) * d];
                  for (std::size_t c = 0; c < d; ++c) dvj[c] += p[t] * doi[c];
                }
              }
            }
            const double* qi = &Q[(i * h + hh) * d];
            t = 0;
            for (const KeyRange& r : kr.items()) {
              for (std::size_t j = r.begin; j < r.end; ++j, ++t) {
                const double g = p[t] * (ds[t] - dot) * scale;
                if (!dQ.empty()) {
                  const double* kj = &K[(j * h + hh) * d];
                  double* dqi = &dQ[(i * h + hh) * d];
                  for (std::size_t c = 0; c < d; ++c) dqi[c] += g * kj[c];
                }
                if (!dK.empty()) {
                  double* dkj = &dK[(j * h + hh) * d];
                  for (std::size_t c = 0; c < d; ++c) dkj[c] += g * qi[c];
                }
              }
            }
          }
        }
      });
}

Var reference_attention(Var q, Var k, Var v, const AttnMask& mask, Dims dims) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.d));
  const std::vector<std::uint8_t> dense = mask.dense();
  std::vector<Var> heads;
  heads.reserve(dims.h);
  for (std::size_t hh = 0; hh < dims.h; ++hh) {
    Var qh = num::head_slice(q, hh);
    Var kh = num::head_slice(k, hh);
    Var vh = num::head_slice(v, hh);
    Var scores = num::scale(num::matmul(qh, num::transpose(kh)), scale);
    heads.push_back(num::matmul(num::softmax_rows(scores, dense), vh));
  }
  return num::concat_heads(heads);
}

}  // namespace

Var masked_attention(Var q, Var k, Var v, const AttnMask& mask, AttentionPath path) {
  const Dims dims = check_qkv(q, k, v);
  if (mask.seq_len() != dims.n) {
    throw DimensionError("attention: mask for " + std::to_string(mask.seq_len()) + " tokens, inputs have " +
                         std::to_string(dims.n));
  }
  return path == AttentionPath::kEfficient ? efficient_attention(q, k, v, mask, dims)
                                           : reference_attention(q, k, v, mask, dims);
}

Var full_attention(Var q, Var k, Var v, AttentionPath path) {
  const Dims dims = check_qkv(q, k, v);
  return masked_attention(q, k, v, AttnMask::causal(dims.n), path);
}

Var streaming_sparse_attention(Var q, Var k, Var v, const SparsePattern& p, AttentionPath path) {
  const Dims dims = check_qkv(q, k, v);
  return masked_attention(q, k, v, build_streaming_mask(dims.n, p), path);
}

Var blend(Var full, Var sparse, Var alpha) {
  if (full.graph == nullptr || full.graph != sparse.graph || full.graph != alpha.graph) {
    throw ContractError("blend operands must share one graph");
  }
  if (full.shape() != sparse.shape()) {
    throw DimensionError("blend: " + num::to_string(full.shape()) + " vs " + num::to_string(sparse.shape()));
  }
  const double a = alpha.value().item();
  if (!(a >= 0.0 && a <= 1.0)) throw ContractError("blend: alpha " + std::to_string(a) + " outside [0, 1]");
  const auto& f = full.value().data;
  const auto& s = sparse.value().data;
  Tensor out(full.shape());
  for (std::size_t i = 0; i < f.size(); ++i) out.data[i] = a * f[i] + (1.0 - a) * s[i];
  const Var ins[] = {full, sparse, alpha};
  return full.graph->record(std::move(out), ins, [a](BackwardContext& ctx) {
    const auto d = ctx.grad_out();
    if (auto df = ctx.grad_in(0); !df.empty()) {
      for (std::size_t i = 0; i < d.size(); ++i) df[i] += a * d[i];
    }
    if (auto ds = ctx.grad_in(1); !ds.empty()) {
      for (std::size_t i = 0; i < d.size(); ++i) ds[i] += (1.0 - a) * d[i];
    }
    if (auto da = ctx.grad_in(2); !da.empty()) {
      const auto& f = ctx.in(0).data;
      const auto& s = ctx.in(1).data;
      double acc = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) acc += d[i] * (f[i] - s[i]);
      da[0] += acc;
    }
  });
}

Var blended_attention(Var q, Var k, Var v, const SparsePattern& p, Var alpha) {
  return blend(full_attention(q, k, v), streaming_sparse_attention(q, k, v, p), alpha);
}

}  // namespace loza::attn
