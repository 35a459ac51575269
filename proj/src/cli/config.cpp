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

#include "loza/cli/config.hpp"

#include <fstream>
#include <sstream>

#include "loza/data/tasks.hpp"
#include "loza/errors.hpp"

namespace loza::cli {

using data::get_or;
using data::require_known_keys;

LabConfig default_config() {
  LabConfig c;
  c.model.n_layers = 8;
  c.model.d_model = 32;
  c.model.n_heads = 2;
  c.model.head_dim = 16;
  c.model.ffn_dim = 64;
  c.model.max_seq_len = 128;
  c.train.corpus.seq_len = 128;
  c.pilot.eval.corpus = c.train.corpus;
  c.pilot.eval.pattern = c.pattern;
  c.calibrate.pattern = c.pattern;
  return c;
}

namespace {

const Json& section(const Json& root, const char* name) {
  static const Json kEmpty = Json::object();
  return root.contains(name) ? root.at(name) : kEmpty;
}

void parse_train(const Json& j, pipeline::TrainOptions& t) {
  require_known_keys(j,
                     {"steps", "batch_size", "lr", "answer_weight", "snapshot_step", "seq_len", "value_len",
                      "distractors"},
                     "train");
  t.steps = get_or(j, "steps", t.steps, "train");
  t.batch_size = get_or(j, "batch_size", t.batch_size, "train");
  t.lr = get_or(j, "lr", t.lr, "train");
  t.answer_weight = get_or(j, "answer_weight", t.answer_weight, "train");
  if (j.contains("snapshot_step")) {
    if (j["snapshot_step"].is_null()) {
      t.snapshot_step.reset();
    } else {
      t.snapshot_step = get_or<std::size_t>(j, "snapshot_step", 0, "train");
    }
  }
  t.corpus.seq_len = get_or(j, "seq_len", t.corpus.seq_len, "train");
  t.corpus.value_len = get_or(j, "value_len", t.corpus.value_len, "train");
  t.corpus.distractors = get_or(j, "distractors", t.corpus.distractors, "train");
  if (t.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(t.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (t.snapshot_step && *t.snapshot_step > t.steps) throw ConfigError("train.snapshot_step exceeds train.steps");
  if (data::max_passkey_distance(t.corpus.seq_len, t.corpus.value_len) < t.corpus.value_len + 1) {
    throw ConfigError("train.seq_len too short for value_len");
  }
}

pipeline::CalibrationLoss parse_loss(const std::string& s) {
  if (s == "cross_entropy") return pipeline::CalibrationLoss::kCrossEntropy;
  if (s == "distill") return pipeline::CalibrationLoss::kDistill;
  throw ConfigError("calibrate.loss: expected 'cross_entropy' or 'distill', got '" + s + "'");
}

const char* loss_name(pipeline::CalibrationLoss l) {
  return l == pipeline::CalibrationLoss::kDistill ? "distill" : "cross_entropy";
}

}  // namespace

LabConfig parse_config(const Json& root) {
  require_known_keys(root, {"model", "pattern", "train", "calibrate", "pilot", "bench"}, "config");
  LabConfig c = default_config();
  try {
    c.model = data::model_config_from_json(section(root, "model"), c.model);
  } catch (const ConfigError&) {
    throw;
  } catch (const ContractError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  c.pattern = data::pattern_from_json(section(root, "pattern"), c.pattern);
  parse_train(section(root, "train"), c.train);
  if (c.train.corpus.seq_len > c.model.max_seq_len) {
    throw ConfigError("train.seq_len " + std::to_string(c.train.corpus.seq_len) + " exceeds model.max_seq_len " +
                      std::to_string(c.model.max_seq_len));
  }

  const Json& cal = section(root, "calibrate");
  require_known_keys(cal, {"steps", "batch_size", "lr", "l1_lambda", "answer_weight", "loss", "sequences"},
                     "calibrate");
  c.calibrate.steps = get_or(cal, "steps", c.calibrate.steps, "calibrate");
  c.calibrate.batch_size = get_or(cal, "batch_size", c.calibrate.batch_size, "calibrate");
  c.calibrate.lr = get_or(cal, "lr", c.calibrate.lr, "calibrate");
  c.calibrate.l1_lambda = get_or(cal, "l1_lambda", c.calibrate.l1_lambda, "calibrate");
  c.calibrate.answer_weight = get_or(cal, "answer_weight", c.train.answer_weight, "calibrate");
  c.calibrate.loss = parse_loss(get_or<std::string>(cal, "loss", loss_name(c.calibrate.loss), "calibrate"));
  c.calibration_sequences = get_or(cal, "sequences", c.calibration_sequences, "calibrate");
  c.calibrate.pattern = c.pattern;
  if (c.calibrate.steps == 0 || c.calibrate.batch_size == 0 || c.calibration_sequences == 0) {
    throw ConfigError("calibrate: steps, batch_size and sequences must be >= 1");
  }

  const Json& pilot = section(root, "pilot");
  require_known_keys(pilot, {"seeds", "ratio", "n_short", "n_long", "n_loss"}, "pilot");
  c.pilot.seeds = get_or(pilot, "seeds", c.pilot.seeds, "pilot");
  c.pilot.ratio = get_or(pilot, "ratio", c.pilot.ratio, "pilot");
  c.pilot.eval.n_short = get_or(pilot, "n_short", c.pilot.eval.n_short, "pilot");
  c.pilot.eval.n_long = get_or(pilot, "n_long", c.pilot.eval.n_long, "pilot");
  c.pilot.eval.n_loss = get_or(pilot, "n_loss", c.pilot.eval.n_loss, "pilot");
  c.pilot.eval.corpus = c.train.corpus;
  c.pilot.eval.pattern = c.pattern;
  if (c.pilot.seeds.empty()) throw ConfigError("pilot.seeds must not be empty");
  if (!(c.pilot.ratio >= 0.0 && c.pilot.ratio <= 1.0)) throw ConfigError("pilot.ratio must lie in [0, 1]");

  const Json& bench = section(root, "bench");
  require_known_keys(bench,
                     {"context_lens", "sparse_fractions", "n_layers", "n_heads", "head_dim", "pattern", "n_ranks",
                      "balance_context", "decode_prompt", "decode_steps"},
                     "bench");
  BenchSection& b = c.bench;
  b.context_lens = get_or(bench, "context_lens", b.context_lens, "bench");
  b.sparse_fractions = get_or(bench, "sparse_fractions", b.sparse_fractions, "bench");
  b.n_layers = get_or(bench, "n_layers", b.n_layers, "bench");
  b.n_heads = get_or(bench, "n_heads", b.n_heads, "bench");
  b.head_dim = get_or(bench, "head_dim", b.head_dim, "bench");
  if (bench.contains("pattern")) b.pattern = data::pattern_from_json(bench.at("pattern"), b.pattern);
  b.n_ranks = get_or(bench, "n_ranks", b.n_ranks, "bench");
  b.balance_context = get_or(bench, "balance_context", b.balance_context, "bench");
  b.decode_prompt = get_or(bench, "decode_prompt", b.decode_prompt, "bench");
  b.decode_steps = get_or(bench, "decode_steps", b.decode_steps, "bench");
  for (double f : b.sparse_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("bench.sparse_fractions entries must lie in [0, 1]");
  }
  for (auto n : b.context_lens) {
    if (n == 0) throw ConfigError("bench.context_lens entries must be >= 1");
  }
  if (b.n_ranks == 0 || b.n_heads % b.n_ranks != 0) throw ConfigError("bench.n_heads must split evenly over n_ranks");
  if (b.decode_prompt.empty()) throw ConfigError("bench.decode_prompt must not be empty");
  return c;
}

LabConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  Json j;
  try {
    j = Json::parse(buf.str());
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return parse_config(j);
}

Json to_json(const LabConfig& c) {
  const auto& t = c.train;
  const auto& b = c.bench;
  return Json{
      {"model", data::to_json(c.model)},
      {"pattern", data::to_json(c.pattern)},
      {"train",
       {{"steps", t.steps},
        {"batch_size", t.batch_size},
        {"lr", t.lr},
        {"answer_weight", t.answer_weight},
        {"snapshot_step", t.snapshot_step ? Json(*t.snapshot_step) : Json(nullptr)},
        {"seq_len", t.corpus.seq_len},
        {"value_len", t.corpus.value_len},
        {"distractors", t.corpus.distractors}}},
      {"calibrate",
       {{"steps", c.calibrate.steps},
        {"batch_size", c.calibrate.batch_size},
        {"lr", c.calibrate.lr},
        {"l1_lambda", c.calibrate.l1_lambda},
        {"answer_weight", c.calibrate.answer_weight},
        {"loss", loss_name(c.calibrate.loss)},
        {"sequences", c.calibration_sequences}}},
      {"pilot",
       {{"seeds", c.pilot.seeds},
        {"ratio", c.pilot.ratio},
        {"n_short", c.pilot.eval.n_short},
        {"n_long", c.pilot.eval.n_long},
        {"n_loss", c.pilot.eval.n_loss}}},
      {"bench",
       {{"context_lens", b.context_lens},
        {"sparse_fractions", b.sparse_fractions},
        {"n_layers", b.n_layers},
        {"n_heads", b.n_heads},
        {"head_dim", b.head_dim},
        {"pattern", data::to_json(b.pattern)},
        {"n_ranks", b.n_ranks},
        {"balance_context", b.balance_context},
        {"decode_prompt", b.decode_prompt},
        {"decode_steps", b.decode_steps}}}};
}

void apply_seed(LabConfig& c, std::uint64_t seed) {
  c.model.seed = data::derive_seed(seed, 0);
  c.train.seed = data::derive_seed(seed, 1);
  c.pilot.eval.seed = data::derive_seed(seed, 2);
  c.pilot.seeds = {seed};
}

pipeline::PilotOptions pilot_options(const LabConfig& c) {
  pipeline::PilotOptions o;
  o.model = c.model;
  o.pattern = c.pattern;
  o.train = c.train;
  o.calibrate = c.calibrate;
  o.calibration_sequences = c.calibration_sequences;
  o.eval = c.pilot.eval;
  o.ratio = c.pilot.ratio;
  return o;
}

}  // namespace loza::cli
