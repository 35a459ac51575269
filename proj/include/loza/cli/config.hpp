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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "loza/attention/pattern.hpp"
#include "loza/data/json_io.hpp"
#include "loza/model/model.hpp"
#include "loza/pipeline/pipeline.hpp"

// The experiment config: one JSON document with optional sections model,
// pattern, train, calibrate, pilot and bench. Unknown keys are errors.
namespace loza::cli {

using data::Json;

struct PilotSection {
  std::vector<std::uint64_t> seeds{7};
  double ratio = 0.5;
  pipeline::EvalOptions eval;  // corpus and pattern come from train/pattern
};

struct BenchSection {
  std::vector<std::uint64_t> context_lens{4096, 32768, 131072, 262144};
  std::vector<double> sparse_fractions{0.0, 0.5, 1.0};
  std::size_t n_layers = 8;
  std::size_t n_heads = 8;
  std::size_t head_dim = 128;
  attn::SparsePattern pattern{1, 7, 128};
  std::size_t n_ranks = 4;
  std::uint64_t balance_context = 65536;
  std::string decode_prompt = "the passkey is";
  std::size_t decode_steps = 64;
};

struct LabConfig {
  model::ModelConfig model;
  attn::SparsePattern pattern{1, 3, 16};
  pipeline::TrainOptions train;
  pipeline::CalibrationOptions calibrate;
  std::size_t calibration_sequences = 32;
  PilotSection pilot;
  BenchSection bench;
};

// Desk-scale defaults shared by the shipped configs.
LabConfig default_config();

// Throws ConfigError.
LabConfig parse_config(const Json& j);
LabConfig load_config(const std::filesystem::path& path);
Json to_json(const LabConfig& c);

// Routes one seed into every random stream (model init, training data).
void apply_seed(LabConfig& c, std::uint64_t seed);

pipeline::PilotOptions pilot_options(const LabConfig& c);

}  // namespace loza::cli
