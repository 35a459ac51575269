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

#include "loza/cli/commands.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <optional>
#include <sstream>

#include "loza/cli/config.hpp"
#include "loza/costmodel/costmodel.hpp"
#include "loza/data/checkpoint.hpp"
#include "loza/data/tasks.hpp"
#include "loza/data/tokenizer.hpp"
#include "loza/errors.hpp"
#include "loza/pipeline/pipeline.hpp"
#include "loza/runtime/runtime.hpp"

namespace loza::cli {
namespace {

struct Common {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct Extra {
  std::string calibration;
  std::string snapshot_out;
  std::string balance_out;
  bool interleaved = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (JSON)");
  cmd->add_option("--checkpoint", c.checkpoint, "input checkpoint");
  cmd->add_option("--out", c.out, "output path");
  cmd->add_option("--seed", c.seed, "seed for every random stream");
}

LabConfig resolve_config(const Common& c) {
  LabConfig cfg = c.config.empty() ? default_config() : load_config(c.config);
  apply_seed(cfg, c.seed.value_or(0));
  return cfg;
}

std::string require(const std::string& value, const std::string& what) {
  if (value.empty()) throw ContractError(what);
  return value;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("write to '" + path + "' failed");
}

Json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  try {
    return Json::parse(buf.str());
  } catch (const Json::parse_error& e) {
    throw IntegrityError("'" + path + "': " + e.what());
  }
}

model::Model load_model(const Common& c, const LabConfig& cfg) {
  return data::load_checkpoint(require(c.checkpoint, "missing --checkpoint"), &cfg.model);
}

int cmd_train(const Common& c, const Extra& x, std::ostream& out, std::ostream& err) {
  const LabConfig cfg = resolve_config(c);
  const std::string path = require(c.out, "train needs --out <checkpoint>");
  model::Model m = model::build_model(cfg.model);
  err << "training " << cfg.model.n_layers << "-layer model for " << cfg.train.steps << " steps\n";
  const pipeline::TrainResult r = pipeline::train(m, cfg.train);
  data::save_checkpoint(m, path, Json{{"steps", cfg.train.steps}});
  if (r.snapshot) {
    const std::string snap = x.snapshot_out.empty() ? path + ".w0" : x.snapshot_out;
    data::write_checkpoint(*r.snapshot, snap);
    err << "rewind snapshot (step " << *cfg.train.snapshot_step << ") -> " << snap << "\n";
  }
  out << "final_loss\t" << (r.losses.empty() ? 0.0 : r.losses.back()) << "\n";
  return 0;
}

int cmd_calibrate(const Common& c, std::ostream& out, std::ostream& err) {
  const LabConfig cfg = resolve_config(c);
  model::Model m = load_model(c, cfg);
  const auto data =
      pipeline::Corpus(cfg.train.corpus, data::derive_seed(c.seed.value_or(0), 4)).take(cfg.calibration_sequences);
  err << "calibrating " << cfg.model.n_layers << " gates for " << cfg.calibrate.steps << " steps\n";
  const pipeline::CalibrationResult r = pipeline::calibrate(m, data, cfg.calibrate);
  write_text(c.out, pipeline::to_json(r).dump(2) + "\n", out);
  return 0;
}

pipeline::CalibrationResult require_calibration(const Extra& x, const std::string& cmd) {
  require(x.calibration, cmd + " needs --calibration <json> from a prior `calibrate` run");
  return pipeline::calibration_from_json(read_json(x.calibration));
}

int cmd_sparsify(const Common& c, const Extra& x, std::ostream& err) {
  const LabConfig cfg = resolve_config(c);
  const auto cal = require_calibration(x, "sparsify");
  const std::string path = require(c.out, "sparsify needs --out <checkpoint>");
  const model::Model m = load_model(c, cfg);
  const model::Model s = pipeline::sparsify(m, cal.ranking, cfg.pilot.ratio, cfg.pattern);
  data::save_checkpoint(s, path);
  for (std::size_t l = 0; l < s.modes().size(); ++l) err << "layer " << l << ": " << model::describe(s.mode(l)) << "\n";
  return 0;
}

int cmd_rewind_train(const Common& c, const Extra& x, std::ostream& err) {
  LabConfig cfg = resolve_config(c);
  const std::string path = require(c.out, "rewind-train needs --out <checkpoint>");
  std::vector<std::size_t> selection;
  if (x.interleaved) {
    selection = pipeline::interleaved_pattern(cfg.model.n_layers);
  } else {
    selection = pipeline::select_lowest(require_calibration(x, "rewind-train").ranking, cfg.pilot.ratio);
  }
  const data::Checkpoint w0 = data::read_checkpoint(require(c.checkpoint, "missing --checkpoint (rewind point)"));
  pipeline::TrainOptions t = cfg.train;
  t.steps -= cfg.train.snapshot_step.value_or(0);
  t.seed = data::derive_seed(c.seed.value_or(0), 3);
  err << "rewinding and training " << selection.size() << " sparse layers for " << t.steps << " steps\n";
  const model::Model m = pipeline::rewind_and_train(w0, cfg.model, selection, cfg.pattern, t);
  data::save_checkpoint(m, path);
  return 0;
}

int cmd_eval(const Common& c, std::ostream& out) {
  const LabConfig cfg = resolve_config(c);
  const model::Model m = load_model(c, cfg);
  write_text(c.out, pipeline::to_json(pipeline::evaluate(m, cfg.pilot.eval)).dump(2) + "\n", out);
  return 0;
}

int cmd_run_pilot(const Common& c, std::ostream& out, std::ostream& err) {
  LabConfig cfg = c.config.empty() ? default_config() : load_config(c.config);
  std::vector<std::uint64_t> seeds = cfg.pilot.seeds;
  if (c.seed) seeds = {*c.seed};
  const pipeline::PilotReport r =
      pipeline::run_pilot(pilot_options(cfg), seeds, [&](const std::string& line) { err << line << "\n"; });
  write_text(c.out, pipeline::to_json(r).dump(2) + "\n", out);
  return 0;
}

Json balance_json(const cost::BalanceReport& r) {
  return Json{{"rank_flops", r.rank_flops}, {"max_over_mean", r.max_over_mean}, {"cv", r.cv}};
}

int cmd_bench_cost(const Common& c, const Extra& x, std::ostream& out) {
  const LabConfig cfg = resolve_config(c);
  const BenchSection& b = cfg.bench;
  const cost::AttnShape shape{b.n_heads, b.head_dim};
  const auto rows = cost::bench_rows(b.context_lens, b.sparse_fractions, b.n_layers, shape, b.pattern);
  std::ostringstream csv;
  cost::write_csv(csv, rows);
  write_text(c.out, csv.str(), out);

  const auto kinds = cost::mixed_kinds(b.n_layers, 0.5);
  const auto layer = cost::rank_balance(cost::layer_level_sharding(kinds, b.n_heads, b.n_ranks), b.balance_context,
                                        b.head_dim, b.pattern);
  const auto head = cost::rank_balance(cost::adversarial_head_sharding(b.n_layers, b.n_heads), b.balance_context,
                                       b.head_dim, b.pattern);
  const Json summary{{"context_len", b.balance_context},
                     {"n_ranks", b.n_ranks},
                     {"layer_level", balance_json(layer)},
                     {"head_level_adversarial", balance_json(head)}};
  std::string balance_path = x.balance_out;
  if (balance_path.empty() && !c.out.empty() && c.out != "-") balance_path = c.out + ".balance.json";
  if (!balance_path.empty()) write_text(balance_path, summary.dump(2) + "\n", out);
  return 0;
}

std::string escape(const std::string& s) {
  std::string r;
  for (char ch : s) {
    if (ch == '\t') r += "\\t";
    else if (ch == '\n') r += "\\n";
    else if (ch == '\\') r += "\\\\";
    else r += ch;
  }
  return r;
}

// Without a checkpoint the demo runs an untrained model with the interleaved
// layers switched to the configured sparse pattern. rows_read_full is what an
// all-full model reads for the same step; rows_read_sparse is what this model
// actually reads.
int cmd_decode_demo(const Common& c, std::ostream& out) {
  const LabConfig cfg = resolve_config(c);
  model::Model m = c.checkpoint.empty() ? model::build_model(cfg.model) : load_model(c, cfg);
  if (c.checkpoint.empty()) {
    m = pipeline::apply_selection(m, pipeline::interleaved_pattern(m.config().n_layers), cfg.pattern);
  }
  const std::vector<int> prompt = data::byte_tokenize(cfg.bench.decode_prompt);
  if (prompt.empty()) throw ContractError("decode-demo: empty decode_prompt");
  if (prompt.size() + cfg.bench.decode_steps > m.config().max_seq_len + 1) {
    throw ContractError("decode-demo: prompt plus decode_steps exceeds max_seq_len " +
                        std::to_string(m.config().max_seq_len));
  }
  std::ofstream file;
  std::ostream* os = &out;
  if (!c.out.empty() && c.out != "-") {
    file.open(c.out, std::ios::binary);
    if (!file) throw IoError("cannot open '" + c.out + "' for writing");
    os = &file;
  }
  *os << "position\ttoken\trows_read_full\trows_read_sparse\n";
  const std::size_t n_layers = m.config().n_layers;
  runtime::DecodeSession s(m);
  runtime::StepResult r = s.prefill(prompt);
  for (std::size_t i = 0; i < cfg.bench.decode_steps; ++i) {
    const int tok = static_cast<int>(runtime::argmax(r.logits));
    // The step that produced tok attended from position s.position() - 1.
    const std::size_t pos = s.position() - 1;
    const std::size_t full = i == 0 ? n_layers * prompt.size() * (prompt.size() + 1) / 2 : n_layers * (pos + 1);
    std::size_t sparse = 0;
    for (std::size_t rows : r.rows_read) sparse += rows;
    const int one[1] = {tok};
    *os << pos + 1 << '\t' << escape(data::detokenize(one)) << '\t' << full << '\t' << sparse << '\n';
    os->flush();
    if (i + 1 < cfg.bench.decode_steps) r = s.decode_step(tok);
  }
  if (!*os) throw IoError("decode-demo: write failed");
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"LoZA lab: calibrate, sparsify and rewind-train streaming-sparse attention layers", "loza"};
  app.require_subcommand(1);
  Common common;
  Extra extra;
  auto* train = app.add_subcommand("train", "train a model from scratch");
  auto* calibrate = app.add_subcommand("calibrate", "fit per-layer gates on a trained model");
  auto* sparsify = app.add_subcommand("sparsify", "switch the lowest-gated layers to sparse attention");
  auto* rewind = app.add_subcommand("rewind-train", "rewind to the snapshot, sparsify and retrain");
  auto* eval = app.add_subcommand("eval", "short/long task metrics for a checkpoint");
  auto* pilot = app.add_subcommand("run-pilot", "full/interleaved/calibrated comparison");
  auto* bench = app.add_subcommand("bench-cost", "analytic prefill/decode cost table and rank balance");
  auto* decode = app.add_subcommand("decode-demo", "greedy decode with per-step KV reads");
  for (auto* cmd : {train, calibrate, sparsify, rewind, eval, pilot, bench, decode}) add_common(cmd, common);
  train->add_option("--snapshot-out", extra.snapshot_out, "where to write the rewind snapshot");
  sparsify->add_option("--calibration", extra.calibration, "calibration result JSON");
  rewind->add_option("--calibration", extra.calibration, "calibration result JSON");
  rewind->add_flag("--interleaved", extra.interleaved, "use the interleaved selection instead");
  bench->add_option("--balance-out", extra.balance_out, "rank-balance JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (*train) return cmd_train(common, extra, out, err);
    if (*calibrate) return cmd_calibrate(common, out, err);
    if (*sparsify) return cmd_sparsify(common, extra, err);
    if (*rewind) return cmd_rewind_train(common, extra, err);
    if (*eval) return cmd_eval(common, out);
    if (*pilot) return cmd_run_pilot(common, out, err);
    if (*bench) return cmd_bench_cost(common, extra, out);
    if (*decode) return cmd_decode_demo(common, out);
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const IntegrityError& e) {
    err << "integrity error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace loza::cli
