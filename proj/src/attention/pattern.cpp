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

#include "loza/attention/pattern.hpp"

#include "loza/errors.hpp"

namespace loza::attn {

void SparsePattern::validate() const {
  if (local_blocks == 0) throw ContractError("sparse pattern needs at least one local block");
  if (block_size == 0) throw ContractError("sparse pattern block size must be positive");
}

std::size_t KeyRanges::total() const {
  std::size_t t = 0;
  for (const KeyRange& r : items()) t += r.size();
  return t;
}

KeyRanges streaming_key_ranges(std::size_t i, const SparsePattern& p) {
  const std::size_t b = p.block_size;
  const std::size_t qb = i / b;
  const std::size_t sink_end = std::min(p.sink_blocks * b, i + 1);
  const std::size_t local_begin = qb + 1 >= p.local_blocks ? (qb + 1 - p.local_blocks) * b : 0;
  KeyRanges out;
  if (local_begin <= sink_end) {
    out.ranges[0] = {0, i + 1};
    out.count = 1;
  } else if (sink_end == 0) {
    out.ranges[0] = {local_begin, i + 1};
    out.count = 1;
  } else {
    out.ranges[0] = {0, sink_end};
    out.ranges[1] = {local_begin, i + 1};
    out.count = 2;
  }
  return out;
}

AttnMask AttnMask::causal(std::size_t n) { return AttnMask(n, std::nullopt); }

AttnMask AttnMask::streaming(std::size_t n, const SparsePattern& p) {
  p.validate();
  return AttnMask(n, p);
}

AttnMask build_streaming_mask(std::size_t n, const SparsePattern& p) {
  if (n == 0) throw ContractError("build_streaming_mask: sequence length must be >= 1");
  return AttnMask::streaming(n, p);
}

bool AttnMask::allowed(std::size_t i, std::size_t j) const {
  if (i >= n_ || j > i) return false;
  if (!pattern_) return true;
  const std::size_t b = pattern_->block_size;
  const std::size_t qb = i / b, kb = j / b;
  return kb < pattern_->sink_blocks || qb - kb < pattern_->local_blocks;
}

KeyRanges AttnMask::key_ranges(std::size_t i) const {
  if (i >= n_) throw ContractError("query position " + std::to_string(i) + " outside sequence");
  if (!pattern_) {
    KeyRanges out;
    out.ranges[0] = {0, i + 1};
    out.count = 1;
    return out;
  }
  return streaming_key_ranges(i, *pattern_);
}

std::vector<std::uint8_t> AttnMask::dense() const {
  std::vector<std::uint8_t> m(n_ * n_, 0);
  for (std::size_t i = 0; i < n_; ++i) {
    for (const KeyRange& r : key_ranges(i).items()) {
      for (std::size_t j = r.begin; j < r.end; ++j) m[i * n_ + j] = 1;
    }
  }
  return m;
}

}  // namespace loza::attn
