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
#include <string>
#include <vector>

namespace loza::data {

enum class TaskKind { kGrammar, kCopy, kPasskey };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& s);

struct TaskSpec {
  TaskKind kind = TaskKind::kPasskey;
  std::size_t seq_len = 128;
  // Passkey only: query position minus the position of the first value
  // token.
  std::size_t passkey_distance = 0;
  std::uint64_t seed = 0;
  // Passkey only: number of value digits.
  std::size_t value_len = 1;
  // Passkey only: random digits scattered through the filler, so the value
  // is identified by the preceding <key> rather than by being a digit.
  std::size_t distractors = 0;

  // Throws ContractError when the instance cannot be laid out.
  void validate() const;
};

struct TaskInstance {
  std::vector<int> tokens;
  // Positions whose next-token prediction must equal the matching answer
  // token. Empty for grammar text.
  std::vector<std::size_t> answer_positions;
  std::vector<int> answer;
  // Passkey: position of the <key> marker and of the first value token.
  std::size_t key_position = 0;
  std::size_t value_position = 0;
  std::size_t query_position = 0;
};

// Filler text from a fixed word-level grammar (lowercase words, spaces).
// Every next token is determined by the previous few tokens except at word
// boundaries, where the grammar branches two ways.
std::vector<int> grammar_text(std::size_t len, std::uint64_t seed);

// Grammar filler with "<key> v1..vk" embedded and "<query> <key> v1..vk" at
// the end; query_position is the second <key>. The value digits are the
// answer. Feasible distances are value_len+1 .. max_passkey_distance.
TaskInstance gen_passkey(const TaskSpec& spec);

// Random letters, <copy>, then the same letters again.
TaskInstance gen_copy(const TaskSpec& spec);

TaskInstance gen_grammar(const TaskSpec& spec);

TaskInstance generate(const TaskSpec& spec);

// Largest distance gen_passkey accepts for this length.
std::size_t max_passkey_distance(std::size_t seq_len, std::size_t value_len);

// Seed for an independent stream derived from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace loza::data
