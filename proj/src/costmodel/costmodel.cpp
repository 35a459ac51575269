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

#include "loza/costmodel/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <sstream>

#include "loza/errors.hpp"

namespace loza::cost {

const char* to_string(AttnKind k) { return k == AttnKind::kFull ? "full" : "sparse"; }
const char* to_string(Phase p) { return p == Phase::kPrefill ? "prefill" : "decode"; }

std::vector<AttnKind> kinds_of(std::span<const model::LayerMode> modes) {
  std::vector<AttnKind> out;
  for (const auto& m : modes) {
    out.push_back(std::holds_alternative<model::SparseMode>(m) ? AttnKind::kSparse : AttnKind::kFull);
  }
  return out;
}

std::vector<AttnKind> mixed_kinds(std::size_t n_layers, double sparse_fraction) {
  if (!(sparse_fraction >= 0.0 && sparse_fraction <= 1.0)) {
    throw ContractError("mode mix: sparse fraction must lie in [0, 1]");
  }
  const auto sparse = static_cast<std::size_t>(std::llround(sparse_fraction * static_cast<double>(n_layers)));
  std::vector<AttnKind> out(n_layers, AttnKind::kFull);
  std::fill_n(out.begin(), sparse, AttnKind::kSparse);
  return out;
}

std::uint64_t allowed_keys_total(std::uint64_t n, AttnKind kind, const SparsePattern& p) {
  if (kind == AttnKind::kFull) return n * (n + 1) / 2;
  p.validate();
  const std::uint64_t b = p.block_size, sink_end = p.sink_blocks * b;
  std::uint64_t total = 0;
  for (std::uint64_t qb = 0; qb * b < n; ++qb) {
    const std::uint64_t lo = qb * b, hi = std::min(n, lo + b);  // queries [lo, hi)
    const std::uint64_t local_start = (qb + 1 >= p.local_blocks ? qb + 1 - p.local_blocks : 0) * b;
    // Sum of (i + 1) over the block.
    const std::uint64_t tri = (hi * (hi + 1) - lo * (lo + 1)) / 2;
    if (local_start <= sink_end) {
      total += tri;
    } else {
      total += (hi - lo) * sink_end + tri - (hi - lo) * local_start;
    }
  }
  return total;
}

std::uint64_t decode_kv_reads(std::uint64_t t, AttnKind kind, const SparsePattern& p) {
  if (t == 0) throw ContractError("decode_kv_reads: t must be >= 1");
  if (kind == AttnKind::kFull) return t;
  return attn::streaming_key_ranges(t - 1, p).total();
}

LayerFlops prefill_attention_flops(std::uint64_t n, std::span<const AttnKind> kinds, AttnShape shape,
                                   const SparsePattern& p) {
  if (n == 0) throw ContractError("prefill_attention_flops: n must be >= 1");
  const std::uint64_t per_key = 4ull * shape.n_heads * shape.head_dim;
  LayerFlops out;
  for (AttnKind k : kinds) {
    out.per_layer.push_back(per_key * allowed_keys_total(n, k, p));
    out.total += out.per_layer.back();
  }
  return out;
}

std::uint64_t attention_cost(std::uint64_t n, std::span<const AttnKind> kinds, AttnShape shape,
                             const SparsePattern& p, Phase phase) {
  if (phase == Phase::kPrefill) return prefill_attention_flops(n, kinds, shape, p).total;
  const std::uint64_t per_key = 4ull * shape.n_heads * shape.head_dim;
  std::uint64_t total = 0;
  for (AttnKind k : kinds) total += per_key * decode_kv_reads(n, k, p);
  return total;
}

std::uint64_t non_attention_flops_per_token(const model::ModelConfig& cfg) {
  const std::uint64_t d = cfg.d_model, inner = cfg.n_heads * cfg.head_dim;
  std::uint64_t proj = 2 * d * inner;  // Q
  if (cfg.latent_dim) {
    proj += 2 * d * *cfg.latent_dim + 2 * 2 * *cfg.latent_dim * inner;
  } else {
    proj += 2 * 2 * d * inner;
  }
  return proj + 2 * inner * d + 2 * 2 * d * cfg.ffn_dim;
}

namespace {

double phase_cost(std::uint64_t n, std::span<const AttnKind> kinds, AttnShape shape, const SparsePattern& p,
                  Phase phase, double na) {
  const double tokens = phase == Phase::kPrefill ? static_cast<double>(n) : 1.0;
  return static_cast<double>(attention_cost(n, kinds, shape, p, phase)) +
         na * tokens * static_cast<double>(kinds.size());
}

}  // namespace

double end_to_end_ratio(std::uint64_t n, std::span<const AttnKind> kinds, AttnShape shape, const SparsePattern& p,
                        Phase phase, double non_attention_per_token_layer) {
  if (kinds.empty()) throw ContractError("end_to_end_ratio: no layers");
  if (non_attention_per_token_layer < 0.0) throw ContractError("end_to_end_ratio: negative non-attention cost");
  const std::vector<AttnKind> full(kinds.size(), AttnKind::kFull);
  return phase_cost(n, kinds, shape, p, phase, non_attention_per_token_layer) /
         phase_cost(n, full, shape, p, phase, non_attention_per_token_layer);
}

double non_attention_for_share(std::uint64_t n, std::size_t n_layers, AttnShape shape, const SparsePattern& p,
                               Phase phase, double share) {
  if (!(share >= 0.0 && share < 1.0)) throw ContractError("non-attention share must lie in [0, 1)");
  const std::vector<AttnKind> full(n_layers, AttnKind::kFull);
  const double attn = static_cast<double>(attention_cost(n, full, shape, p, phase));
  const double tokens = phase == Phase::kPrefill ? static_cast<double>(n) : 1.0;
  // share = X / (attn + X) with X = na * tokens * layers.
  return share / (1.0 - share) * attn / (tokens * static_cast<double>(n_layers));
}

CostReport make_report(std::uint64_t n, std::span<const AttnKind> kinds, AttnShape shape, const SparsePattern& p) {
  CostReport r;
  r.context_len = n;
  r.kinds.assign(kinds.begin(), kinds.end());
  const LayerFlops pf = prefill_attention_flops(n, kinds, shape, p);
  r.prefill_flops = pf.per_layer;
  r.prefill_total = pf.total;
  for (AttnKind k : kinds) {
    r.decode_rows.push_back(decode_kv_reads(n, k, p));
    r.decode_total += r.decode_rows.back();
  }
  r.prefill_full = kinds.size() * 4ull * shape.n_heads * shape.head_dim * (n * (n + 1) / 2);
  r.decode_full = kinds.size() * n;
  if (!kinds.empty()) {
    r.prefill_ratio = static_cast<double>(r.prefill_total) / static_cast<double>(r.prefill_full);
    r.decode_ratio = static_cast<double>(r.decode_total) / static_cast<double>(r.decode_full);
  }
  return r;
}

std::vector<BenchRow> bench_rows(std::span<const std::uint64_t> context_lens, std::span<const double> sparse_fractions,
                                 std::size_t n_layers, AttnShape shape, const SparsePattern& p) {
  std::vector<BenchRow> rows;
  for (std::uint64_t n : context_lens) {
    for (Phase phase : {Phase::kPrefill, Phase::kDecode}) {
      for (double f : sparse_fractions) {
        const auto kinds = mixed_kinds(n_layers, f);
        const CostReport r = make_report(n, kinds, shape, p);
        std::ostringstream mix;
        mix << "sparse" << std::count(kinds.begin(), kinds.end(), AttnKind::kSparse) << "of" << n_layers;
        const bool pre = phase == Phase::kPrefill;
        rows.push_back({n, phase, mix.str(), attention_cost(n, kinds, shape, p, phase), r.decode_total,
                        pre ? r.prefill_ratio : r.decode_ratio});
      }
    }
  }
  return rows;
}

void write_csv(std::ostream& os, std::span<const BenchRow> rows) {
  os << "context_len,phase,mode_mix,attention_flops,kv_rows,ratio_vs_full\n";
  const auto old = os.precision(17);
  for (const auto& r : rows) {
    os << r.context_len << ',' << to_string(r.phase) << ',' << r.mode_mix << ',' << r.attention_flops << ','
       << r.kv_rows << ',' << r.ratio_vs_full << '\n';
  }
  os.precision(old);
}

RankAssignment layer_level_sharding(std::span<const AttnKind> kinds, std::size_t n_heads, std::size_t n_ranks) {
  if (n_ranks == 0 || n_heads % n_ranks != 0) {
    throw ContractError("layer-level sharding: " + std::to_string(n_heads) + " heads do not split over " +
                        std::to_string(n_ranks) + " ranks");
  }
  RankAssignment a{kinds.size(), n_heads, ShardUnit::kLayer, std::vector<std::vector<WorkItem>>(n_ranks)};
  for (std::size_t l = 0; l < kinds.size(); ++l) {
    for (std::size_t h = 0; h < n_heads; ++h) a.ranks[h % n_ranks].push_back({l, h, kinds[l]});
  }
  return a;
}

RankAssignment adversarial_head_sharding(std::size_t n_layers, std::size_t n_heads) {
  if (n_heads < 2 || n_heads % 2 != 0) throw ContractError("adversarial sharding needs an even head count >= 2");
  RankAssignment a{n_layers, n_heads, ShardUnit::kHead, std::vector<std::vector<WorkItem>>(2)};
  for (std::size_t l = 0; l < n_layers; ++l) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      const bool sparse = h >= n_heads / 2;
      a.ranks[sparse ? 1 : 0].push_back({l, h, sparse ? AttnKind::kSparse : AttnKind::kFull});
    }
  }
  return a;
}

BalanceReport rank_balance(const RankAssignment& a, std::uint64_t n, std::size_t head_dim, const SparsePattern& p,
                           std::uint64_t switch_penalty) {
  if (a.ranks.empty()) throw ContractError("rank_balance: no ranks");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& rank : a.ranks) {
    for (const WorkItem& w : rank) {
      if (w.layer >= a.n_layers || w.head >= a.n_heads) {
        throw IntegrityError("rank_balance: work item (" + std::to_string(w.layer) + ", " + std::to_string(w.head) +
                             ") out of range");
      }
      if (!seen.insert({w.layer, w.head}).second) {
        throw IntegrityError("rank_balance: head (" + std::to_string(w.layer) + ", " + std::to_string(w.head) +
                             ") assigned twice");
      }
    }
  }
  if (seen.size() != a.n_layers * a.n_heads) {
    throw IntegrityError("rank_balance: " + std::to_string(a.n_layers * a.n_heads - seen.size()) +
                         " unassigned heads");
  }
  const std::uint64_t full = 4ull * head_dim * allowed_keys_total(n, AttnKind::kFull, p);
  const std::uint64_t sparse = 4ull * head_dim * allowed_keys_total(n, AttnKind::kSparse, p);
  BalanceReport r;
  for (const auto& rank : a.ranks) {
    std::uint64_t f = 0;
    for (std::size_t i = 0; i < rank.size(); ++i) {
      f += rank[i].kind == AttnKind::kFull ? full : sparse;
      if (i > 0 && rank[i].kind != rank[i - 1].kind) f += switch_penalty;
    }
    r.rank_flops.push_back(f);
  }
  const double k = static_cast<double>(r.rank_flops.size());
  double mean = 0.0;
  for (auto f : r.rank_flops) mean += static_cast<double>(f);
  mean /= k;
  if (mean == 0.0) return r;
  // Exactly equal loads give exactly zero spread.
  if (std::all_of(r.rank_flops.begin(), r.rank_flops.end(), [&](auto f) { return f == r.rank_flops[0]; })) return r;
  double var = 0.0;
  for (auto f : r.rank_flops) var += (static_cast<double>(f) - mean) * (static_cast<double>(f) - mean);
  r.cv = std::sqrt(var / k) / mean;
  r.max_over_mean = static_cast<double>(*std::max_element(r.rank_flops.begin(), r.rank_flops.end())) / mean;
  return r;
}

}  // namespace loza::cost
