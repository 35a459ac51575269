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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "loza/attention/pattern.hpp"
#include "loza/model/model.hpp"
#include "loza/numerics/tensor.hpp"

namespace loza::runtime {

using attn::SparsePattern;
using model::Model;
using num::Tensor;

// Unbounded per-layer cache: one K and one V row per processed token.
class FullKvCache {
 public:
  explicit FullKvCache(std::size_t width) : width_(width) {}

  void append(std::span<const double> k, std::span<const double> v);
  std::size_t width() const { return width_; }
  std::size_t tokens() const { return tokens_; }
  std::size_t retained_rows() const { return tokens_; }

  // Calls f(position, k_row, v_row) for every visible row, ascending.
  template <typename F>
  void for_each_row(F&& f) const {
    for (std::size_t p = 0; p < tokens_; ++p) f(p, &k_[p * width_], &v_[p * width_]);
  }

 private:
  std::size_t width_;
  std::size_t tokens_ = 0;
  std::vector<double> k_, v_;
};

// Bounded cache for a streaming-sparse layer: a sink store for the first s
// blocks and a ring of l blocks. Eviction happens only when a new block
// opens, so the retained rows are exactly the keys the newest token may see.
class SsaKvCache {
 public:
  SsaKvCache(std::size_t width, const SparsePattern& p);

  void append(std::span<const double> k, std::span<const double> v);
  std::size_t width() const { return width_; }
  std::size_t tokens() const { return tokens_; }
  std::size_t retained_rows() const;
  const SparsePattern& pattern() const { return p_; }
  // Oldest retained local position; equals sink end while none is held.
  std::size_t local_begin() const { return local_begin_; }

  template <typename F>
  void for_each_row(F&& f) const {
    const std::size_t sink_rows = std::min(tokens_, sink_cap_);
    for (std::size_t p = 0; p < sink_rows; ++p) f(p, &sink_k_[p * width_], &sink_v_[p * width_]);
    for (std::size_t p = std::max(local_begin_, sink_cap_); p < tokens_; ++p) {
      const std::size_t slot = (p - sink_cap_) % ring_cap_;
      f(p, &ring_k_[slot * width_], &ring_v_[slot * width_]);
    }
  }

 private:
  std::size_t width_;
  SparsePattern p_;
  std::size_t sink_cap_, ring_cap_;
  std::size_t tokens_ = 0;
  std::size_t local_begin_ = 0;
  std::vector<double> sink_k_, sink_v_, ring_k_, ring_v_;
};

using LayerCache = std::variant<FullKvCache, SsaKvCache>;

std::size_t cache_tokens(const LayerCache& c);
std::size_t retained_rows(const LayerCache& c);

// Single-query attention of q ({heads*head_dim}) over the cache, written to
// out. Returns the number of KV rows read.
std::size_t attend(const LayerCache& cache, std::span<const double> q, std::size_t heads, std::size_t head_dim,
                   std::span<double> out);

struct StepResult {
  Tensor logits;                       // {vocab}, last position
  std::vector<std::size_t> rows_read;  // per layer, this call
};

// Incremental decoder over one model. Full layers get a FullKvCache, Sparse
// layers an SsaKvCache; Blended layers are rejected. The model must outlive
// the session and keep its modes.
class DecodeSession {
 public:
  explicit DecodeSession(const Model& m);

  // Processes a nonempty prompt in one parallel pass.
  StepResult prefill(std::span<const int> tokens);
  // Appends one token; throws IntegrityError if caches disagree with the
  // session position or the model's modes changed.
  StepResult decode_step(int token);

  std::size_t position() const { return position_; }
  const std::vector<LayerCache>& caches() const { return caches_; }
  // Mutable access for fault injection in tests.
  std::vector<LayerCache>& mutable_caches() { return caches_; }

 private:
  void check_consistent() const;

  const Model* m_;
  std::vector<model::LayerMode> modes_;
  std::vector<LayerCache> caches_;
  std::size_t position_ = 0;
};

std::size_t argmax(const Tensor& logits);

struct GreedyTrace {
  std::vector<int> tokens;                          // generated tokens
  std::vector<Tensor> logits;                       // logits that produced each token
  std::vector<std::vector<std::size_t>> rows_read;  // per step, per layer
};

// Prefills the prompt then greedily decodes steps tokens.
GreedyTrace greedy_decode(const Model& m, std::span<const int> prompt, std::size_t steps);

// Mean wall-clock seconds of one single-query attention step over a
// synthetic cache of t tokens (Full when pattern is unset). With cold_bytes
// set, the cache is replicated until the copies span at least that many
// bytes and the timed steps rotate through them, so each step reads its
// rows from memory rather than from a warm CPU cache. Pick cold_bytes above
// the last-level cache size to time memory traffic.
double time_decode_attention(std::size_t t, const std::optional<SparsePattern>& pattern, std::size_t heads,
                             std::size_t head_dim, std::size_t reps, std::uint64_t seed,
                             std::size_t cold_bytes = 0);

}  // namespace loza::runtime
