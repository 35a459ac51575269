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

#include "loza/data/tasks.hpp"

#include <array>
#include <random>
#include <set>

#include "loza/data/tokenizer.hpp"
#include "loza/errors.hpp"

namespace loza::data {
namespace {

struct Grammar {
  std::vector<std::string> words;
  std::vector<std::array<std::size_t, 2>> successors;
};

const Grammar& grammar() {
  static const Grammar g = [] {
    Grammar out;
    std::mt19937_64 rng(0x5eedULL);
    std::set<std::string> seen;
    while (out.words.size() < 24) {
      std::string w;
      const std::size_t len = 2 + rng() % 3;
      for (std::size_t i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng() % 26));
      if (seen.insert(w).second) out.words.push_back(w);
    }
    for (std::size_t i = 0; i < out.words.size(); ++i) {
      const std::size_t a = rng() % out.words.size();
      std::size_t b = rng() % out.words.size();
      if (b == a) b = (b + 1) % out.words.size();
      out.successors.push_back({a, b});
    }
    return out;
  }();
  return g;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kGrammar: return "grammar";
    case TaskKind::kCopy: return "copy";
    case TaskKind::kPasskey: return "passkey";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "grammar") return TaskKind::kGrammar;
  if (s == "copy") return TaskKind::kCopy;
  if (s == "passkey") return TaskKind::kPasskey;
  throw ContractError("unknown task kind '" + s + "'");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL));
}

std::size_t max_passkey_distance(std::size_t seq_len, std::size_t value_len) {
  if (seq_len < 2 * value_len + 3) return 0;
  return seq_len - 1 - value_len - 1;
}

void TaskSpec::validate() const {
  if (seq_len < 2) throw ContractError("task: seq_len must be >= 2");
  if (kind != TaskKind::kPasskey) return;
  if (value_len == 0) throw ContractError("passkey: value_len must be >= 1");
  if (passkey_distance >= seq_len) {
    throw ContractError("passkey: distance " + std::to_string(passkey_distance) + " must be below seq_len " +
                        std::to_string(seq_len));
  }
  const std::size_t hi = max_passkey_distance(seq_len, value_len);
  if (passkey_distance < value_len + 1 || passkey_distance > hi) {
    throw ContractError("passkey: distance " + std::to_string(passkey_distance) + " infeasible for seq_len " +
                        std::to_string(seq_len) + " and value_len " + std::to_string(value_len) +
                        " (need " + std::to_string(value_len + 1) + ".." + std::to_string(hi) + ")");
  }
}

std::vector<int> grammar_text(std::size_t len, std::uint64_t seed) {
  const Grammar& g = grammar();
  std::mt19937_64 rng(seed);
  std::vector<int> out;
  out.reserve(len + 8);
  std::size_t w = rng() % g.words.size();
  while (out.size() < len) {
    for (char c : g.words[w]) out.push_back(static_cast<unsigned char>(c));
    out.push_back(' ');
    w = g.successors[w][rng() % 2];
  }
  out.resize(len);
  return out;
}

TaskInstance gen_grammar(const TaskSpec& spec) {
  spec.validate();
  TaskInstance t;
  t.tokens = grammar_text(spec.seq_len, derive_seed(spec.seed, 1));
  return t;
}

TaskInstance gen_passkey(const TaskSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, 2));
  TaskInstance t;
  t.tokens = grammar_text(spec.seq_len, derive_seed(spec.seed, 3));
  const std::size_t k = spec.value_len;
  t.query_position = spec.seq_len - 1 - k;
  t.value_position = t.query_position - spec.passkey_distance;
  t.key_position = t.value_position - 1;
  // The prompt repeats the key marker after <query>; the answer is whatever
  // followed the first marker.
  t.tokens[t.key_position] = kKeyToken;
  t.tokens[t.query_position - 1] = kQueryToken;
  t.tokens[t.query_position] = kKeyToken;
  for (std::size_t i = 0; i < k; ++i) {
    const int digit = '0' + static_cast<int>(rng() % 10);
    t.tokens[t.value_position + i] = digit;
    t.tokens[t.query_position + 1 + i] = digit;
    t.answer.push_back(digit);
    t.answer_positions.push_back(t.query_position + i);
  }
  // Distractors avoid the key/value span and the prompt; fewer are placed if
  // the filler runs out of room.
  std::vector<std::size_t> free;
  for (std::size_t p = 0; p + 1 < t.query_position; ++p) {
    if (p + 1 < t.key_position || p > t.value_position + k) free.push_back(p);
  }
  for (std::size_t i = 0; i < spec.distractors && !free.empty(); ++i) {
    const std::size_t pick = rng() % free.size();
    t.tokens[free[pick]] = '0' + static_cast<int>(rng() % 10);
    free.erase(free.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return t;
}

TaskInstance gen_copy(const TaskSpec& spec) {
  spec.validate();
  if (spec.seq_len < 3) throw ContractError("copy: seq_len must be >= 3");
  std::mt19937_64 rng(derive_seed(spec.seed, 4));
  const std::size_t m = (spec.seq_len - 1) / 2;
  TaskInstance t;
  for (std::size_t i = 0; i < m; ++i) t.tokens.push_back('a' + static_cast<int>(rng() % 26));
  t.tokens.push_back(kCopyToken);
  for (std::size_t i = 0; i < m; ++i) {
    t.answer_positions.push_back(t.tokens.size() - 1);
    t.answer.push_back(t.tokens[i]);
    t.tokens.push_back(t.tokens[i]);
  }
  while (t.tokens.size() < spec.seq_len) t.tokens.push_back(kPadToken);
  t.query_position = m;
  return t;
}

TaskInstance generate(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::kGrammar: return gen_grammar(spec);
    case TaskKind::kCopy: return gen_copy(spec);
    case TaskKind::kPasskey: return gen_passkey(spec);
  }
  throw ContractError("unknown task kind");
}

}  // namespace loza::data
