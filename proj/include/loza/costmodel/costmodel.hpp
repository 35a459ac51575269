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
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "loza/attention/pattern.hpp"
#include "loza/model/model.hpp"

// Analytic attention cost. One multiply-accumulate counts as 2 FLOPs;
// softmax and norm FLOPs are excluded. Decode cost is KV rows read.
namespace loza::cost {

using attn::SparsePattern;

enum class AttnKind { kFull, kSparse };
enum class Phase { kPrefill, kDecode };

const char* to_string(AttnKind k);
const char* to_string(Phase p);

// Blended layers are costed as Full (their full branch dominates).
std::vector<AttnKind> kinds_of(std::span<const model::LayerMode> modes);
// First round(fraction * n_layers) layers Sparse; used for mode mixes.
std::vector<AttnKind> mixed_kinds(std::size_t n_layers, double sparse_fraction);

struct AttnShape {
  std::size_t n_heads = 1;
  std::size_t head_dim = 1;
};

// Sum over queries 0..n-1 of the number of visible keys.
std::uint64_t allowed_keys_total(std::uint64_t n, AttnKind kind, const SparsePattern& p);

// Keys read by the query at position t-1, i.e. with t tokens in context.
std::uint64_t decode_kv_reads(std::uint64_t t, AttnKind kind, const SparsePattern& p);

struct LayerFlops {
  std::vector<std::uint64_t> per_layer;
  std::uint64_t total = 0;
};

// Score plus value FLOPs: 2 * 2 * heads * head_dim per visible (query, key).
LayerFlops prefill_attention_flops(std::uint64_t n, std::span<const AttnKind> kinds, AttnShape shape,
                                   const SparsePattern& p);

// Attention cost of one phase in FLOPs: the prefill of n tokens, or the
// decode step with n tokens in context.
std::uint64_t attention_cost(std::uint64_t n, std::span<const AttnKind> kinds, AttnShape shape,
                             const SparsePattern& p, Phase phase);

// Non-attention FLOPs per token per layer: projections and feed-forward.
std::uint64_t non_attention_flops_per_token(const model::ModelConfig& cfg);

// Whole-model cost ratio vs the all-Full baseline, adding non_attention
// FLOPs per token per layer (times n tokens for prefill, once for decode).
double end_to_end_ratio(std::uint64_t n, std::span<const AttnKind> kinds, AttnShape shape, const SparsePattern& p,
                        Phase phase, double non_attention_per_token_layer);

// The per-token-per-layer non-attention cost that makes up `share` of the
// all-Full baseline cost. share in [0, 1).
double non_attention_for_share(std::uint64_t n, std::size_t n_layers, AttnShape shape, const SparsePattern& p,
                               Phase phase, double share);

struct CostReport {
  std::uint64_t context_len = 0;
  std::vector<AttnKind> kinds;
  std::vector<std::uint64_t> prefill_flops;  // per layer
  std::vector<std::uint64_t> decode_rows;    // per layer, one step at context_len
  std::uint64_t prefill_total = 0, decode_total = 0;
  std::uint64_t prefill_full = 0, decode_full = 0;
  double prefill_ratio = 1.0, decode_ratio = 1.0;
};

CostReport make_report(std::uint64_t n, std::span<const AttnKind> kinds, AttnShape shape, const SparsePattern& p);

// One CSV row per (context length, phase, mode mix).
struct BenchRow {
  std::uint64_t context_len;
  Phase phase;
  std::string mode_mix;
  std::uint64_t attention_flops;
  std::uint64_t kv_rows;
  double ratio_vs_full;
};

std::vector<BenchRow> bench_rows(std::span<const std::uint64_t> context_lens, std::span<const double> sparse_fractions,
                                 std::size_t n_layers, AttnShape shape, const SparsePattern& p);
void write_csv(std::ostream& os, std::span<const BenchRow> rows);

// --- Tensor-parallel load balance ---

enum class ShardUnit { kLayer, kHead };

struct WorkItem {
  std::size_t layer = 0;
  std::size_t head = 0;
  AttnKind kind = AttnKind::kFull;
};

struct RankAssignment {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  ShardUnit unit = ShardUnit::kLayer;
  std::vector<std::vector<WorkItem>> ranks;
};

struct BalanceReport {
  std::vector<std::uint64_t> rank_flops;
  double max_over_mean = 1.0;
  double cv = 0.0;  // population std / mean
};

// Layer-level sparsity: each rank takes heads h with h % n_ranks == r from
// every layer, so all ranks see the same layer mix.
RankAssignment layer_level_sharding(std::span<const AttnKind> kinds, std::size_t n_heads, std::size_t n_ranks);

// Head-level sparsity with half of every layer's heads sparse, sharded so
// rank 0 holds every full head and rank 1 every sparse head.
RankAssignment adversarial_head_sharding(std::size_t n_layers, std::size_t n_heads);

// Per-rank prefill FLOPs at context n. switch_penalty FLOPs are added per
// adjacent pair of work items on a rank whose kinds differ (default 0; an
// unvalidated stand-in for divergence and schedule recompute). Throws
// IntegrityError unless every (layer, head) is assigned exactly once.
BalanceReport rank_balance(const RankAssignment& a, std::uint64_t n, std::size_t head_dim, const SparsePattern& p,
                           std::uint64_t switch_penalty = 0);

}  // namespace loza::cost
