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

#include "loza/runtime/runtime.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "loza/attention/mla.hpp"
#include "loza/errors.hpp"
#include "loza/numerics/graph.hpp"
#include "loza/numerics/ops.hpp"

namespace loza::runtime {

using num::Graph;
using num::Var;

namespace {

void check_row(std::span<const double> k, std::span<const double> v, std::size_t width) {
  if (k.size() != width || v.size() != width) {
    throw DimensionError("kv cache: row width " + std::to_string(k.size()) + "/" + std::to_string(v.size()) +
                         ", expected " + std::to_string(width));
  }
}

std::span<const double> row(const Tensor& t, std::size_t r, std::size_t width) {
  return {t.data.data() + r * width, width};
}

}  // namespace

void FullKvCache::append(std::span<const double> k, std::span<const double> v) {
  check_row(k, v, width_);
  k_.insert(k_.end(), k.begin(), k.end());
  v_.insert(v_.end(), v.begin(), v.end());
  ++tokens_;
}

SsaKvCache::SsaKvCache(std::size_t width, const SparsePattern& p) : width_(width), p_(p) {
  p_.validate();
  sink_cap_ = p_.sink_blocks * p_.block_size;
  ring_cap_ = p_.local_blocks * p_.block_size;
  local_begin_ = sink_cap_;
  ring_k_.resize(ring_cap_ * width_);
  ring_v_.resize(ring_cap_ * width_);
}

void SsaKvCache::append(std::span<const double> k, std::span<const double> v) {
  check_row(k, v, width_);
  const std::size_t t = tokens_;
  if (t < sink_cap_) {
    sink_k_.insert(sink_k_.end(), k.begin(), k.end());
    sink_v_.insert(sink_v_.end(), v.begin(), v.end());
  } else {
    // A local block kb expires once qb - kb >= l; only block openings move this.
    const std::size_t qb = t / p_.block_size;
    if (qb + 1 >= p_.local_blocks) {
      local_begin_ = std::max(local_begin_, (qb + 1 - p_.local_blocks) * p_.block_size);
    }
    const std::size_t slot = (t - sink_cap_) % ring_cap_;
    std::copy(k.begin(), k.end(), ring_k_.begin() + static_cast<std::ptrdiff_t>(slot * width_));
    std::copy(v.begin(), v.end(), ring_v_.begin() + static_cast<std::ptrdiff_t>(slot * width_));
  }
  ++tokens_;
}

std::size_t SsaKvCache::retained_rows() const {
  return std::min(tokens_, sink_cap_) + (tokens_ > local_begin_ ? tokens_ - local_begin_ : 0);
}

std::size_t cache_tokens(const LayerCache& c) {
  return std::visit([](const auto& x) { return x.tokens(); }, c);
}

std::size_t retained_rows(const LayerCache& c) {
  return std::visit([](const auto& x) { return x.retained_rows(); }, c);
}

std::size_t attend(const LayerCache& cache, std::span<const double> q, std::size_t heads, std::size_t head_dim,
                   std::span<double> out) {
  const std::size_t width = heads * head_dim;
  if (q.size() != width || out.size() != width) throw DimensionError("attend: query/output width mismatch");
  return std::visit(
      [&](const auto& c) -> std::size_t {
        if (c.width() != width) throw DimensionError("attend: cache width " + std::to_string(c.width()));
        const std::size_t rows = c.retained_rows();
        if (rows == 0) throw ContractError("attend: empty cache");
        const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
        std::vector<double> scores(rows * heads);
        std::vector<double> peak(heads, -std::numeric_limits<double>::infinity());
        std::size_t r = 0;
        c.for_each_row([&](std::size_t, const double* k, const double*) {
          for (std::size_t h = 0; h < heads; ++h) {
            double s = 0.0;
            for (std::size_t e = 0; e < head_dim; ++e) s += q[h * head_dim + e] * k[h * head_dim + e];
            s *= scale;
            scores[r * heads + h] = s;
            peak[h] = std::max(peak[h], s);
          }
          ++r;
        });
        std::vector<double> denom(heads, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t h = 0; h < heads; ++h) {
            double& s = scores[i * heads + h];
            s = std::exp(s - peak[h]);
            denom[h] += s;
          }
        }
        std::fill(out.begin(), out.end(), 0.0);
        r = 0;
        c.for_each_row([&](std::size_t, const double*, const double* v) {
          for (std::size_t h = 0; h < heads; ++h) {
            const double p = scores[r * heads + h] / denom[h];
            for (std::size_t e = 0; e < head_dim; ++e) out[h * head_dim + e] += p * v[h * head_dim + e];
          }
          ++r;
        });
        return rows;
      },
      cache);
}

DecodeSession::DecodeSession(const Model& m) : m_(&m), modes_(m.modes()) {
  const std::size_t width = m.config().n_heads * m.config().head_dim;
  for (std::size_t l = 0; l < modes_.size(); ++l) {
    if (const auto* s = std::get_if<model::SparseMode>(&modes_[l])) {
      caches_.emplace_back(SsaKvCache(width, s->pattern));
    } else if (std::holds_alternative<model::FullMode>(modes_[l])) {
      caches_.emplace_back(FullKvCache(width));
    } else {
      throw ContractError("decode: layer " + std::to_string(l) + " is " + model::describe(modes_[l]) +
                          "; only Full and Sparse layers can be decoded");
    }
  }
}

void DecodeSession::check_consistent() const {
  if (m_->modes() != modes_) throw IntegrityError("decode: model layer modes changed after session start");
  if (caches_.size() != modes_.size()) {
    throw IntegrityError("decode: " + std::to_string(caches_.size()) + " caches for " +
                         std::to_string(modes_.size()) + " layers");
  }
  for (std::size_t l = 0; l < caches_.size(); ++l) {
    const std::size_t seen = cache_tokens(caches_[l]);
    if (seen != position_) {
      throw IntegrityError("decode: layer " + std::to_string(l) + " cache holds " + std::to_string(seen) +
                           " tokens, session is at position " + std::to_string(position_));
    }
    const bool sparse = std::holds_alternative<SsaKvCache>(caches_[l]);
    if (sparse != std::holds_alternative<model::SparseMode>(modes_[l])) {
      throw IntegrityError("decode: layer " + std::to_string(l) + " cache kind does not match its mode");
    }
  }
}

StepResult DecodeSession::prefill(std::span<const int> tokens) {
  if (tokens.empty()) throw ContractError("prefill: empty prompt");
  if (position_ != 0) throw ContractError("prefill: session already holds " + std::to_string(position_) + " tokens");
  check_consistent();
  const Model& m = *m_;
  const std::size_t n = tokens.size(), width = m.config().n_heads * m.config().head_dim;
  Graph g(false);
  StepResult res;
  Var x = model::embed(g, m, tokens, 0);
  for (std::size_t l = 0; l < caches_.size(); ++l) {
    const attn::Qkv qkv = model::layer_qkv(g, m, l, x);
    std::visit(
        [&](auto& c) {
          for (std::size_t i = 0; i < n; ++i) c.append(row(qkv.k.value(), i, width), row(qkv.v.value(), i, width));
        },
        caches_[l]);
    std::size_t reads = 0;
    if (const auto* s = std::get_if<model::SparseMode>(&modes_[l])) {
      for (std::size_t i = 0; i < n; ++i) reads += attn::streaming_key_ranges(i, s->pattern).total();
    } else {
      reads = n * (n + 1) / 2;
    }
    res.rows_read.push_back(reads);
    x = model::layer_finish(g, m, l, x, model::layer_attention(g, m, l, qkv, {}));
  }
  const Tensor& lg = model::output_logits(g, m, num::slice_rows(x, n - 1, n)).value();
  res.logits = Tensor({lg.shape[1]}, lg.data);
  position_ = n;
  return res;
}

StepResult DecodeSession::decode_step(int token) {
  check_consistent();
  const Model& m = *m_;
  const std::size_t heads = m.config().n_heads, hd = m.config().head_dim, width = heads * hd;
  Graph g(false);
  StepResult res;
  const int tok[1] = {token};
  Var x = model::embed(g, m, tok, position_);
  for (std::size_t l = 0; l < caches_.size(); ++l) {
    const attn::Qkv qkv = model::layer_qkv(g, m, l, x);
    std::visit([&](auto& c) { c.append(row(qkv.k.value(), 0, width), row(qkv.v.value(), 0, width)); }, caches_[l]);
    Tensor out({1, heads, hd});
    res.rows_read.push_back(attend(caches_[l], row(qkv.q.value(), 0, width), heads, hd, out.data));
    x = model::layer_finish(g, m, l, x, g.constant(std::move(out)));
  }
  const Tensor& lg = model::output_logits(g, m, x).value();
  res.logits = Tensor({lg.shape[1]}, lg.data);
  ++position_;
  return res;
}

std::size_t argmax(const Tensor& logits) {
  if (logits.data.empty()) throw ContractError("argmax: empty logits");
  return static_cast<std::size_t>(std::max_element(logits.data.begin(), logits.data.end()) - logits.data.begin());
}

GreedyTrace greedy_decode(const Model& m, std::span<const int> prompt, std::size_t steps) {
  DecodeSession s(m);
  GreedyTrace trace;
  StepResult r = s.prefill(prompt);
  for (std::size_t i = 0; i < steps; ++i) {
    const int next = static_cast<int>(argmax(r.logits));
    trace.tokens.push_back(next);
    trace.logits.push_back(r.logits);
    trace.rows_read.push_back(r.rows_read);
    if (i + 1 < steps) r = s.decode_step(next);
  }
  return trace;
}

double time_decode_attention(std::size_t t, const std::optional<SparsePattern>& pattern, std::size_t heads,
                             std::size_t head_dim, std::size_t reps, std::uint64_t seed, std::size_t cold_bytes) {
  if (t == 0 || reps == 0) throw ContractError("time_decode_attention: t and reps must be >= 1");
  const std::size_t width = heads * head_dim;
  std::vector<LayerCache> copies;
  copies.push_back(pattern ? LayerCache(SsaKvCache(width, *pattern)) : LayerCache(FullKvCache(width)));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> k(width), v(width), q(width), out(width);
  for (std::size_t i = 0; i < t; ++i) {
    for (auto& e : k) e = nd(rng);
    for (auto& e : v) e = nd(rng);
    std::visit([&](auto& c) { c.append(k, v); }, copies.front());
  }
  const std::size_t bytes = retained_rows(copies.front()) * width * 2 * sizeof(double);
  const std::size_t n_copies = std::max<std::size_t>(1, (cold_bytes + bytes - 1) / bytes);
  while (copies.size() < n_copies) copies.push_back(copies.front());
  for (auto& e : q) e = nd(rng);
  if (n_copies == 1) attend(copies.front(), q, heads, head_dim, out);  // warm-up
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < reps; ++r) attend(copies[r % n_copies], q, heads, head_dim, out);
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
  return dt.count() / static_cast<double>(reps);
}

}  // namespace loza::runtime
