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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loza/data/checkpoint.hpp"
#include "loza/data/tasks.hpp"
#include "loza/data/json_io.hpp"
#include "loza/model/model.hpp"

namespace loza::pipeline {

using data::Checkpoint;
using data::Json;
using model::Model;
using model::ModelConfig;
using num::Graph;
using num::Var;

using data::TaskInstance;
using Sequence = std::vector<int>;

// Training distribution: passkey instances of fixed length whose distance is
// drawn uniformly over every feasible value, so both in-window and
// out-of-window retrievals appear.
struct CorpusOptions {
  std::size_t seq_len = 128;
  std::size_t value_len = 1;
  std::size_t distractors = 0;
};

class Corpus {
 public:
  Corpus(CorpusOptions opts, std::uint64_t seed);
  TaskInstance next();
  std::vector<TaskInstance> take(std::size_t count);

 private:
  CorpusOptions opts_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// Mean next-token cross-entropy plus answer_weight times the mean
// cross-entropy at the instance's answer positions. A lone answer token is
// otherwise a negligible share of the loss.
Var task_loss(Graph& g, const Model& m, const TaskInstance& inst, double answer_weight,
              const model::ForwardOptions& fo = {});

struct TrainOptions {
  std::size_t steps = 100;
  std::size_t batch_size = 8;
  double lr = 3e-3;
  double answer_weight = 1.0;
  std::uint64_t seed = 0;
  CorpusOptions corpus;
  // When set, a Checkpoint of the parameters after this many steps is kept
  // (0 = before the first update). This is the lottery-ticket rewind point.
  std::optional<std::size_t> snapshot_step;
};

struct TrainResult {
  std::vector<double> losses;  // mean batch loss per step
  std::optional<Checkpoint> snapshot;
};

// Adam on every parameter, using the model's current layer modes.
TrainResult train(Model& m, const TrainOptions& opts);

enum class CalibrationLoss { kCrossEntropy, kDistill };

struct CalibrationOptions {
  std::size_t steps = 50;
  std::size_t batch_size = 8;
  double lr = 0.05;
  double l1_lambda = 0.0;
  double answer_weight = 1.0;  // cross-entropy objective only
  attn::SparsePattern pattern{1, 3, 16};
  CalibrationLoss loss = CalibrationLoss::kCrossEntropy;
};

struct CalibrationResult {
  std::vector<double> alphas;        // sigmoid(gate), one per layer
  std::vector<std::size_t> ranking;  // layer indices by ascending alpha, ties by index
  std::size_t steps_run = 0;
  double final_loss = 0.0;
};

// Blends every layer (gate initialised to alpha = 0.5), trains only the gates
// on `data` with the backbone frozen, reports the gates and restores Full
// modes. Batches cycle through `data` in order.
CalibrationResult calibrate(Model& m, std::span<const TaskInstance> data, const CalibrationOptions& opts);

std::vector<std::size_t> rank_layers(std::span<const double> alphas);

// The floor(ratio * n_layers) lowest-ranked layers.
std::vector<std::size_t> select_lowest(std::span<const std::size_t> ranking, double ratio);

// Copy of m with the floor(ratio * n_layers) first layers of `ranking` Sparse
// and every other layer Full.
Model sparsify(const Model& m, std::span<const std::size_t> ranking, double ratio,
               const attn::SparsePattern& pattern);

// Odd layer indices: one of every two adjacent layers.
std::vector<std::size_t> interleaved_pattern(std::size_t n_layers);

// Copy of m with exactly `selection` Sparse.
Model apply_selection(const Model& m, std::span<const std::size_t> selection, const attn::SparsePattern& pattern);

// Restores w0, sparsifies `selection` and trains every parameter. A config
// other than `expected` raises IncompatibilityError.
Model rewind_and_train(const Checkpoint& w0, const ModelConfig& expected, std::span<const std::size_t> selection,
                       const attn::SparsePattern& pattern, const TrainOptions& opts);

struct EvalOptions {
  std::size_t n_short = 32;
  std::size_t n_long = 64;
  std::size_t n_loss = 16;
  std::uint64_t seed = 0;
  CorpusOptions corpus;
  // Long-task instances put the value outside this pattern's window and
  // outside its sink blocks.
  attn::SparsePattern pattern{1, 3, 16};
};

struct EvalMetrics {
  double lm_loss = 0.0;
  double short_task_acc = 0.0;  // next-token accuracy on grammar text
  double long_task_acc = 0.0;   // exact-match passkey retrieval beyond the window
};

EvalMetrics evaluate(const Model& m, const EvalOptions& opts);

// Out-of-window passkey distances for evaluation; empty if none fit.
std::vector<std::size_t> long_range_distances(const CorpusOptions& corpus, const attn::SparsePattern& p);

struct PilotOptions {
  ModelConfig model;
  attn::SparsePattern pattern{1, 3, 16};
  TrainOptions train;          // steps = T1; snapshot_step = T0
  CalibrationOptions calibrate;
  std::size_t calibration_sequences = 32;
  EvalOptions eval;
  double ratio = 0.5;
};

inline constexpr const char* kPilotVariants[] = {"full", "interleaved", "interleaved_trained", "calibrated",
                                                 "calibrated_trained"};

struct PilotSeedRun {
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, EvalMetrics>> variants;  // in kPilotVariants order
  CalibrationResult calibration;
  std::vector<std::size_t> calibrated_selection;
  std::vector<std::size_t> interleaved_selection;
};

struct PilotReport {
  std::vector<PilotSeedRun> runs;
  std::vector<std::pair<std::string, EvalMetrics>> mean;

  const EvalMetrics& mean_of(const std::string& variant) const;
};

// Per seed: train the base model (saving the rewind point), evaluate it,
// apply the interleaved pattern, rewind and sparse-train it, calibrate,
// sparsify the lowest-gated layers, rewind and sparse-train that. Seeds run
// in order; means are taken in seed order.
PilotReport run_pilot(const PilotOptions& opts, std::span<const std::uint64_t> seeds,
                      const std::function<void(const std::string&)>& log = {});

PilotSeedRun run_pilot_seed(const PilotOptions& opts, std::uint64_t seed,
                            const std::function<void(const std::string&)>& log = {});

Json to_json(const CalibrationResult& r);
CalibrationResult calibration_from_json(const Json& j);
Json to_json(const EvalMetrics& m);
Json to_json(const PilotReport& r);

}  // namespace loza::pipeline
