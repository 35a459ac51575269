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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace loza::attn {

// Streaming window: the first `sink_blocks` blocks of the sequence plus the
// `local_blocks` most recent blocks (the query's own block included), each
// `block_size` tokens long.
struct SparsePattern {
  std::size_t sink_blocks = 1;
  std::size_t local_blocks = 7;
  std::size_t block_size = 128;

  std::size_t window_tokens() const { return (sink_blocks + local_blocks) * block_size; }
  // Throws ContractError when local_blocks == 0 or block_size == 0.
  void validate() const;

  bool operator==(const SparsePattern&) const = default;
};

// Half-open key interval [begin, end).
struct KeyRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
};

// At most two disjoint, ascending key intervals (sink part, local part).
struct KeyRanges {
  std::array<KeyRange, 2> ranges{};
  std::size_t count = 0;

  std::span<const KeyRange> items() const { return {ranges.data(), count}; }
  std::size_t total() const;
};

// Attention visibility for a length-n sequence. Stored per query block as
// key-block intervals rather than as a dense n x n bitmap.
class AttnMask {
 public:
  static AttnMask causal(std::size_t n);
  static AttnMask streaming(std::size_t n, const SparsePattern& p);

  std::size_t seq_len() const { return n_; }
  const std::optional<SparsePattern>& pattern() const { return pattern_; }

  bool allowed(std::size_t i, std::size_t j) const;
  KeyRanges key_ranges(std::size_t i) const;
  std::size_t allowed_count(std::size_t i) const { return key_ranges(i).total(); }

  // Dense row-major n x n, nonzero = allowed. Only for small n.
  std::vector<std::uint8_t> dense() const;

 private:
  AttnMask(std::size_t n, std::optional<SparsePattern> p) : n_(n), pattern_(p) {}

  std::size_t n_;
  std::optional<SparsePattern> pattern_;
};

AttnMask build_streaming_mask(std::size_t n, const SparsePattern& p);

// Keys visible to query position i under pattern p, independent of any
// sequence length. Shared by the mask, the KV cache and the cost model.
KeyRanges streaming_key_ranges(std::size_t i, const SparsePattern& p);

}  // namespace loza::attn
