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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "loza/attention/pattern.hpp"
#include "loza/costmodel/costmodel.hpp"
#include "loza/errors.hpp"

namespace loza::cost {
namespace {

const SparsePattern kPaper{1, 7, 128};

std::uint64_t brute_keys(std::uint64_t n, const SparsePattern& p) {
  std::uint64_t total = 0;
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t j = 0; j <= i; ++j) {
      const std::uint64_t qb = i / p.block_size, kb = j / p.block_size;
      total += (kb < p.sink_blocks || qb - kb < p.local_blocks) ? 1 : 0;
    }
  return total;
}

TEST(AllowedKeys, ClosedFormMatchesBruteForce) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const SparsePattern p{rng() % 3, 1 + rng() % 4, 1 + rng() % 9};
    for (std::uint64_t n : {1ull, 2ull, 7ull, 33ull, 100ull, 257ull}) {
      EXPECT_EQ(allowed_keys_total(n, AttnKind::kSparse, p), brute_keys(n, p)) << n;
    }
  }
  EXPECT_EQ(allowed_keys_total(10, AttnKind::kFull, kPaper), 55u);
}

TEST(AllowedKeys, EqualWithinWindowStrictlyLessBeyond) {
  const std::uint64_t w = kPaper.window_tokens();
  EXPECT_EQ(allowed_keys_total(w, AttnKind::kSparse, kPaper), allowed_keys_total(w, AttnKind::kFull, kPaper));
  EXPECT_EQ(allowed_keys_total(500, AttnKind::kSparse, kPaper), allowed_keys_total(500, AttnKind::kFull, kPaper));
  EXPECT_LT(allowed_keys_total(w + 1, AttnKind::kSparse, kPaper),
            allowed_keys_total(w + 1, AttnKind::kFull, kPaper));
}

TEST(Prefill, GrowthExponents) {
  // Least-squares slope of log(flops) against log(n) over n = 2^14..2^20.
  auto slope = [](AttnKind k) {
    std::vector<double> xs, ys;
    for (int e = 14; e <= 20; ++e) {
      const std::vector<AttnKind> kinds{k};
      xs.push_back(e * std::log(2.0));
      ys.push_back(std::log(double(prefill_attention_flops(1ull << e, kinds, {1, 64}, kPaper).total)));
    }
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      num += (xs[i] - mx) * (ys[i] - my);
      den += (xs[i] - mx) * (xs[i] - mx);
    }
    return num / den;
  };
  EXPECT_NEAR(slope(AttnKind::kSparse), 1.0, 0.02);
  EXPECT_NEAR(slope(AttnKind::kFull), 2.0, 0.02);
}

TEST(Prefill, HalfSparseAt256K) {
  const std::uint64_t n = 262144;
  const auto kinds = mixed_kinds(8, 0.5);
  const AttnShape shape{8, 128};
  const double ratio = double(prefill_attention_flops(n, kinds, shape, kPaper).total) /
                       double(prefill_attention_flops(n, mixed_kinds(8, 0.0), shape, kPaper).total);
  const double closed = 0.5 + 0.5 * double(allowed_keys_total(n, AttnKind::kSparse, kPaper)) /
                                   double(allowed_keys_total(n, AttnKind::kFull, kPaper));
  EXPECT_NEAR(ratio, closed, 1e-12);
  EXPECT_LE(ratio, 0.51);
}

TEST(Prefill, FormulaPerLayer) {
  const std::vector<AttnKind> kinds{AttnKind::kFull};
  EXPECT_EQ(prefill_attention_flops(10, kinds, {2, 3}, kPaper).total, 2u * 2 * 2 * 3 * 55);
  EXPECT_THROW(prefill_attention_flops(0, kinds, {2, 3}, kPaper), ContractError);
}

TEST(Decode, PaperContext) {
  EXPECT_EQ(decode_kv_reads(131072, AttnKind::kSparse, kPaper), 1024u);
  EXPECT_EQ(decode_kv_reads(131072, AttnKind::kFull, kPaper), 131072u);
  EXPECT_LE(1024.0 / 131072.0, 0.10);
  EXPECT_EQ(decode_kv_reads(512, AttnKind::kSparse, kPaper), 512u);
  EXPECT_EQ(decode_kv_reads(512, AttnKind::kFull, kPaper), 512u);
  EXPECT_THROW(decode_kv_reads(0, AttnKind::kFull, kPaper), ContractError);
}

TEST(Decode, MonotoneUntilWindowThenBoundedSawTooth) {
  const std::uint64_t w = kPaper.window_tokens();
  for (std::uint64_t t = 1; t < w; ++t) {
    EXPECT_LE(decode_kv_reads(t, AttnKind::kSparse, kPaper), decode_kv_reads(t + 1, AttnKind::kSparse, kPaper));
  }
  // Whole-block eviction: the read count drops when a new block opens and
  // climbs back to the window at the block's last position.
  EXPECT_EQ(decode_kv_reads(w + 1, AttnKind::kSparse, kPaper), 897u);
  for (std::uint64_t t = w; t < 6 * w; ++t) {
    const auto r = decode_kv_reads(t, AttnKind::kSparse, kPaper);
    EXPECT_LE(r, w);
    EXPECT_GE(r, w - kPaper.block_size + 1);
    if (t % kPaper.block_size == 0) EXPECT_EQ(r, w);
  }
}

TEST(EndToEnd, AllFullIsExactlyOne) {
  const auto kinds = mixed_kinds(8, 0.0);
  for (Phase ph : {Phase::kPrefill, Phase::kDecode}) {
    EXPECT_EQ(end_to_end_ratio(262144, kinds, {8, 128}, kPaper, ph, 12345.0), 1.0);
  }
}

TEST(EndToEnd, MixtureLimitAndShareBound) {
  const auto half = mixed_kinds(8, 0.5);
  const double r0 = end_to_end_ratio(1ull << 24, half, {8, 128}, kPaper, Phase::kDecode, 0.0);
  EXPECT_GT(r0, 0.5);
  EXPECT_LT(r0, 0.5 + 1e-3);
  for (double share : {0.0, 0.1, 0.2, 0.3}) {
    const double na = non_attention_for_share(262144, 8, {8, 128}, kPaper, Phase::kDecode, share);
    const double r = end_to_end_ratio(262144, half, {8, 128}, kPaper, Phase::kDecode, na);
    EXPECT_LT(r, 0.70) << share;
    EXPECT_NEAR(r, (1 - share) * (0.5 + 0.5 * 1024.0 / 262144.0) + share, 1e-9);
  }
}

TEST(EndToEnd, NonAttentionFlopsFromConfig) {
  model::ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.head_dim = 8;
  cfg.ffn_dim = 32;
  EXPECT_EQ(non_attention_flops_per_token(cfg), 3u * 2 * 16 * 16 + 2 * 16 * 16 + 4 * 16 * 32);
  cfg.latent_dim = 4;
  EXPECT_EQ(non_attention_flops_per_token(cfg), 2u * 16 * 16 + 2 * 16 * 4 + 4 * 4 * 16 + 2 * 16 * 16 + 4 * 16 * 32);
}

TEST(Report, RatiosInUnitInterval) {
  const auto kinds = mixed_kinds(4, 0.5);
  for (std::uint64_t n : {1ull, 100ull, 5000ull}) {
    const CostReport r = make_report(n, kinds, {2, 16}, kPaper);
    EXPECT_GT(r.prefill_ratio, 0.0);
    EXPECT_LE(r.prefill_ratio, 1.0);
    EXPECT_GT(r.decode_ratio, 0.0);
    EXPECT_LE(r.decode_ratio, 1.0);
  }
  EXPECT_EQ(make_report(100, kinds, {2, 16}, kPaper).prefill_ratio, 1.0);
}

TEST(Report, CsvHeaderAndRows) {
  const std::uint64_t lens[] = {1024, 4096};
  const double mixes[] = {0.0, 0.5};
  const auto rows = bench_rows(lens, mixes, 4, {2, 16}, kPaper);
  EXPECT_EQ(rows.size(), 8u);
  std::ostringstream os;
  write_csv(os, rows);
  std::string first;
  std::getline(std::istringstream(os.str()) >> std::ws, first);
  EXPECT_EQ(first, "context_len,phase,mode_mix,attention_flops,kv_rows,ratio_vs_full");
  EXPECT_NE(os.str().find("4096,decode,sparse2of4,"), std::string::npos);
}

TEST(Balance, LayerLevelIsExactlyUniform) {
  const auto kinds = mixed_kinds(8, 0.5);
  for (std::size_t ranks : {1u, 2u, 4u, 8u}) {
    const BalanceReport r = rank_balance(layer_level_sharding(kinds, 8, ranks), 65536, 128, kPaper);
    EXPECT_EQ(r.cv, 0.0);
    EXPECT_EQ(r.max_over_mean, 1.0);
  }
}

TEST(Balance, AdversarialHeadLevel) {
  const BalanceReport r = rank_balance(adversarial_head_sharding(8, 8), 65536, 128, kPaper);
  const double full = double(allowed_keys_total(65536, AttnKind::kFull, kPaper));
  const double sparse = double(allowed_keys_total(65536, AttnKind::kSparse, kPaper));
  EXPECT_NEAR(r.max_over_mean, 2 * full / (full + sparse), 1e-12);
  EXPECT_GT(r.max_over_mean, 1.5);
}

TEST(Balance, PermutationInvariantCv) {
  std::mt19937_64 rng(9);
  RankAssignment a{4, 4, ShardUnit::kHead, std::vector<std::vector<WorkItem>>(3)};
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t h = 0; h < 4; ++h)
      a.ranks[rng() % 3].push_back({l, h, rng() % 2 ? AttnKind::kFull : AttnKind::kSparse});
  const double cv = rank_balance(a, 4096, 64, kPaper).cv;
  std::sort(a.ranks.begin(), a.ranks.end(), [](const auto& x, const auto& y) { return x.size() < y.size(); });
  std::reverse(a.ranks.begin(), a.ranks.end());
  EXPECT_EQ(rank_balance(a, 4096, 64, kPaper).cv, cv);
}

TEST(Balance, AssignmentErrorsAndPenalty) {
  auto a = layer_level_sharding(mixed_kinds(2, 0.5), 2, 2);
  a.ranks[1].pop_back();
  EXPECT_THROW(rank_balance(a, 1024, 8, kPaper), IntegrityError);
  a = layer_level_sharding(mixed_kinds(2, 0.5), 2, 2);
  a.ranks[0].push_back(a.ranks[1][0]);
  EXPECT_THROW(rank_balance(a, 1024, 8, kPaper), IntegrityError);
  EXPECT_THROW(layer_level_sharding(mixed_kinds(2, 0.5), 3, 2), ContractError);

  const auto b = layer_level_sharding(mixed_kinds(2, 0.5), 2, 2);
  const auto base = rank_balance(b, 4096, 8, kPaper);
  const auto pen = rank_balance(b, 4096, 8, kPaper, 1000);
  EXPECT_EQ(pen.rank_flops[0], base.rank_flops[0] + 1000);
}

}  // namespace
}  // namespace loza::cost
