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

#include "loza/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "loza/attention/pattern.hpp"
#include "loza/data/tasks.hpp"
#include "loza/errors.hpp"
#include "loza/numerics/ops.hpp"
#include "loza/numerics/optim.hpp"

namespace loza::pipeline {
using num::Tensor;

namespace {

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void accumulate_grads(const Graph& g, Model& m) {
  for (Tensor* t : m.parameters()) {
    const auto* gr = g.grad_of(*t);
    if (gr == nullptr || !t->grad) continue;
    auto& acc = *t->grad;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (*gr)[i];
  }
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t v = logits.shape[1];
  const double* r = &logits.data[row * v];
  return static_cast<std::size_t>(std::max_element(r, r + v) - r);
}

}  // namespace

Corpus::Corpus(CorpusOptions opts, std::uint64_t seed) : opts_(opts), seed_(seed) {
  if (data::max_passkey_distance(opts_.seq_len, opts_.value_len) < opts_.value_len + 1) {
    throw ContractError("corpus: seq_len " + std::to_string(opts_.seq_len) + " too short for value_len " +
                        std::to_string(opts_.value_len));
  }
}

TaskInstance Corpus::next() {
  const std::uint64_t inst = data::derive_seed(seed_, counter_++);
  std::mt19937_64 rng(data::derive_seed(inst, 7));
  const std::size_t lo = opts_.value_len + 1, hi = data::max_passkey_distance(opts_.seq_len, opts_.value_len);
  std::uniform_int_distribution<std::size_t> dist(lo, hi);
  data::TaskSpec spec{data::TaskKind::kPasskey, opts_.seq_len, dist(rng), inst, opts_.value_len, opts_.distractors};
  return data::gen_passkey(spec);
}

std::vector<TaskInstance> Corpus::take(std::size_t count) {
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(next());
  return out;
}

Var task_loss(Graph& g, const Model& m, const TaskInstance& inst, double answer_weight,
              const model::ForwardOptions& fo) {
  const std::span<const int> tokens = inst.tokens;
  if (tokens.size() < 2) throw ContractError("task_loss needs at least 2 tokens");
  Var logits = model::forward(g, m, tokens, fo);
  Var loss = num::cross_entropy(num::slice_rows(logits, 0, tokens.size() - 1), tokens.subspan(1));
  if (answer_weight == 0.0 || inst.answer_positions.empty()) return loss;
  const std::size_t a0 = inst.answer_positions.front(), k = inst.answer_positions.size();
  for (std::size_t i = 0; i < k; ++i) {
    if (inst.answer_positions[i] != a0 + i || a0 + i + 1 >= tokens.size()) {
      throw ContractError("task_loss: answer positions must be contiguous and inside the sequence");
    }
  }
  Var answer = num::cross_entropy(num::slice_rows(logits, a0, a0 + k), tokens.subspan(a0 + 1, k));
  return num::add(loss, num::scale(answer, answer_weight));
}

TrainResult train(Model& m, const TrainOptions& opts) {
  if (opts.batch_size == 0) throw ContractError("train: batch_size must be >= 1");
  TrainResult result;
  m.set_trainable(true);
  num::Adam opt(m.parameters(), {.lr = opts.lr});
  Corpus corpus(opts.corpus, data::derive_seed(opts.seed, 11));
  if (opts.snapshot_step && *opts.snapshot_step == 0) result.snapshot = Checkpoint::capture(m, Json{{"step", 0}});
  const double inv_batch = 1.0 / static_cast<double>(opts.batch_size);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    opt.zero_grad();
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < opts.batch_size; ++b) {
      const TaskInstance inst = corpus.next();
      Graph g;
      Var loss = num::scale(task_loss(g, m, inst, opts.answer_weight), inv_batch);
      g.backward(loss);
      accumulate_grads(g, m);
      loss_sum += loss.value().item();
    }
    opt.step();
    if (!m.all_finite()) {
      m.set_trainable(false);
      throw IntegrityError("non-finite parameter after training step " + std::to_string(step));
    }
    result.losses.push_back(loss_sum);
    if (opts.snapshot_step && *opts.snapshot_step == step + 1) {
      result.snapshot = Checkpoint::capture(m, Json{{"step", step + 1}});
    }
  }
  m.set_trainable(false);
  if (opts.snapshot_step && !result.snapshot) {
    throw ContractError("train: snapshot_step " + std::to_string(*opts.snapshot_step) + " beyond " +
                        std::to_string(opts.steps) + " steps");
  }
  return result;
}

std::vector<std::size_t> rank_layers(std::span<const double> alphas) {
  std::vector<std::size_t> order(alphas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return alphas[a] < alphas[b]; });
  return order;
}

CalibrationResult calibrate(Model& m, std::span<const TaskInstance> data, const CalibrationOptions& opts) {
  if (opts.steps == 0) throw ContractError("calibrate: steps must be >= 1");
  if (data.empty()) throw ContractError("calibrate: calibration data is empty");
  if (opts.batch_size == 0) throw ContractError("calibrate: batch_size must be >= 1");
  for (std::size_t i = 0; i < m.modes().size(); ++i) {
    if (!std::holds_alternative<model::FullMode>(m.mode(i))) {
      throw ContractError("calibrate: layer " + std::to_string(i) + " is " + model::describe(m.mode(i)) +
                          "; calibration starts from an all-Full model");
    }
  }
  opts.pattern.validate();
  const std::size_t n_layers = m.config().n_layers;
  m.set_trainable(false);

  std::vector<Tensor> teacher;
  if (opts.loss == CalibrationLoss::kDistill) {
    for (const TaskInstance& s : data) teacher.push_back(model::logits(m, s.tokens));
  }

  const std::vector<model::LayerMode> saved = m.modes();
  Tensor gates({n_layers});
  gates.requires_grad = true;
  num::Adam opt({&gates}, {.lr = opts.lr, .clip_norm = 0.0});
  auto apply_gates = [&] {
    for (std::size_t i = 0; i < n_layers; ++i) m.set_mode(i, model::BlendedMode{gates.data[i], opts.pattern});
  };

  CalibrationResult result;
  const double inv_batch = 1.0 / static_cast<double>(opts.batch_size);
  std::size_t cursor = 0;
  try {
    apply_gates();
    for (std::size_t step = 0; step < opts.steps; ++step) {
      gates.zero_grad();
      double loss_sum = 0.0;
      for (std::size_t b = 0; b < opts.batch_size; ++b, ++cursor) {
        const std::size_t idx = cursor % data.size();
        Graph g;
        std::vector<Var> gate_vars;
        model::ForwardOptions fo{.trainable_gates = true, .gate_vars = &gate_vars};
        Var loss = opts.loss == CalibrationLoss::kDistill
                       ? model::distill_loss(g, m, data[idx].tokens, teacher[idx], fo)
                       : task_loss(g, m, data[idx], opts.answer_weight, fo);
        loss = num::scale(loss, inv_batch);
        g.backward(loss);
        loss_sum += loss.value().item();
        for (std::size_t i = 0; i < n_layers; ++i) {
          if (const auto* gr = g.grad(gate_vars[i])) (*gates.grad)[i] += (*gr)[0];
        }
      }
      // l1_lambda * sum(alpha), differentiated through the sigmoid.
      for (std::size_t i = 0; i < n_layers; ++i) {
        const double a = sigmoid(gates.data[i]);
        loss_sum += opts.l1_lambda * a;
        (*gates.grad)[i] += opts.l1_lambda * a * (1.0 - a);
      }
      opt.step();
      apply_gates();
      result.final_loss = loss_sum;
      ++result.steps_run;
    }
  } catch (...) {
    m.set_modes(saved);
    throw;
  }
  m.set_modes(saved);
  for (double raw : gates.data) result.alphas.push_back(sigmoid(raw));
  result.ranking = rank_layers(result.alphas);
  return result;
}

std::vector<std::size_t> select_lowest(std::span<const std::size_t> ranking, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ContractError("sparsify: ratio must lie in [0, 1]");
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(ranking.size())));
  std::vector<std::size_t> out(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.begin(), out.end());
  return out;
}

Model apply_selection(const Model& m, std::span<const std::size_t> selection, const attn::SparsePattern& pattern) {
  Model out = m;
  std::vector<model::LayerMode> modes(m.config().n_layers, model::FullMode{});
  for (std::size_t layer : selection) {
    if (layer >= modes.size()) throw ContractError("selection names layer " + std::to_string(layer) + " out of range");
    modes[layer] = model::SparseMode{pattern};
  }
  out.set_modes(std::move(modes));
  return out;
}

Model sparsify(const Model& m, std::span<const std::size_t> ranking, double ratio, const attn::SparsePattern& pattern) {
  if (ranking.size() != m.config().n_layers) {
    throw ContractError("sparsify: ranking covers " + std::to_string(ranking.size()) + " of " +
                        std::to_string(m.config().n_layers) + " layers");
  }
  return apply_selection(m, select_lowest(ranking, ratio), pattern);
}

std::vector<std::size_t> interleaved_pattern(std::size_t n_layers) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < n_layers; i += 2) out.push_back(i);
  return out;
}

Model rewind_and_train(const Checkpoint& w0, const ModelConfig& expected, std::span<const std::size_t> selection,
                       const attn::SparsePattern& pattern, const TrainOptions& opts) {
  Model m = apply_selection(w0.restore(&expected), selection, pattern);
  TrainOptions o = opts;
  o.snapshot_step.reset();
  train(m, o);
  return m;
}

std::vector<std::size_t> long_range_distances(const CorpusOptions& corpus, const attn::SparsePattern& p) {
  std::vector<std::size_t> out;
  const std::size_t k = corpus.value_len;
  const std::size_t hi = data::max_passkey_distance(corpus.seq_len, k);
  const std::size_t q = corpus.seq_len - 1 - k;
  const attn::AttnMask mask = attn::build_streaming_mask(corpus.seq_len, p);
  for (std::size_t d = std::max(k, p.window_tokens() + 1); d <= hi; ++d) {
    const std::size_t vp = q - d;
    if ((vp - 1) / p.block_size < p.sink_blocks) continue;
    bool hidden = true;
    for (std::size_t i = 0; i < k && hidden; ++i)
      for (std::size_t j = vp - 1; j < vp + k && hidden; ++j) hidden = !mask.allowed(q + i, j);
    if (hidden) out.push_back(d);
  }
  return out;
}

EvalMetrics evaluate(const Model& m, const EvalOptions& opts) {
  EvalMetrics out;
  const std::size_t n = opts.corpus.seq_len;

  Corpus corpus(opts.corpus, data::derive_seed(opts.seed, 21));
  for (std::size_t i = 0; i < opts.n_loss; ++i) out.lm_loss += model::lm_loss_value(m, corpus.next().tokens);
  if (opts.n_loss) out.lm_loss /= static_cast<double>(opts.n_loss);

  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < opts.n_short; ++i) {
    const auto inst = data::gen_grammar({data::TaskKind::kGrammar, n, 0, data::derive_seed(opts.seed, 1000 + i)});
    const Tensor lg = model::logits(m, inst.tokens);
    for (std::size_t p = 0; p + 1 < n; ++p, ++total) hits += argmax_row(lg, p) == static_cast<std::size_t>(inst.tokens[p + 1]);
  }
  out.short_task_acc = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;

  const auto distances = long_range_distances(opts.corpus, opts.pattern);
  if (opts.n_long > 0 && distances.empty()) {
    throw ContractError("evaluate: seq_len " + std::to_string(n) + " leaves no out-of-window passkey distance");
  }
  std::mt19937_64 rng(data::derive_seed(opts.seed, 31));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < opts.n_long; ++i) {
    const std::size_t d = distances[rng() % distances.size()];
    const auto inst = data::gen_passkey(
        {data::TaskKind::kPasskey, n, d, data::derive_seed(opts.seed, 5000 + i), opts.corpus.value_len,
         opts.corpus.distractors});
    const Tensor lg = model::logits(m, inst.tokens);
    bool ok = true;
    for (std::size_t a = 0; a < inst.answer.size(); ++a) {
      ok = ok && argmax_row(lg, inst.answer_positions[a]) == static_cast<std::size_t>(inst.answer[a]);
    }
    correct += ok;
  }
  out.long_task_acc = opts.n_long ? static_cast<double>(correct) / static_cast<double>(opts.n_long) : 0.0;
  return out;
}

PilotSeedRun run_pilot_seed(const PilotOptions& opts, std::uint64_t seed,
                            const std::function<void(const std::string&)>& log) {
  auto note = [&](const std::string& s) {
    if (log) log("seed " + std::to_string(seed) + ": " + s);
  };
  if (!opts.train.snapshot_step || *opts.train.snapshot_step > opts.train.steps) {
    throw ContractError("pilot: train.snapshot_step (rewind point) must be set and <= train.steps");
  }
  PilotSeedRun run;
  run.seed = seed;
  ModelConfig cfg = opts.model;
  cfg.seed = data::derive_seed(seed, 0);

  Model base = model::build_model(cfg);
  TrainOptions base_train = opts.train;
  base_train.seed = data::derive_seed(seed, 1);
  note("training base model for " + std::to_string(base_train.steps) + " steps");
  TrainResult trained = train(base, base_train);
  const Checkpoint w0 = *trained.snapshot;

  TrainOptions retrain = opts.train;
  retrain.seed = data::derive_seed(seed, 3);
  retrain.steps = opts.train.steps - *opts.train.snapshot_step;
  retrain.snapshot_step.reset();

  EvalOptions eval = opts.eval;
  eval.seed = data::derive_seed(seed, 2);
  eval.pattern = opts.pattern;

  auto record = [&](const std::string& name, const Model& m) {
    run.variants.emplace_back(name, evaluate(m, eval));
    const EvalMetrics& e = run.variants.back().second;
    note(name + " loss=" + std::to_string(e.lm_loss) + " short=" + std::to_string(e.short_task_acc) +
         " long=" + std::to_string(e.long_task_acc));
  };

  record("full", base);
  run.interleaved_selection = interleaved_pattern(cfg.n_layers);
  record("interleaved", apply_selection(base, run.interleaved_selection, opts.pattern));
  record("interleaved_trained", rewind_and_train(w0, cfg, run.interleaved_selection, opts.pattern, retrain));

  const auto calib_data = Corpus(opts.train.corpus, data::derive_seed(seed, 4)).take(opts.calibration_sequences);
  CalibrationOptions copts = opts.calibrate;
  copts.pattern = opts.pattern;
  run.calibration = calibrate(base, calib_data, copts);
  run.calibrated_selection = select_lowest(run.calibration.ranking, opts.ratio);
  std::string alphas;
  for (double a : run.calibration.alphas) alphas += std::to_string(a).substr(0, 5) + " ";
  note("calibrated alphas " + alphas);
  record("calibrated", sparsify(base, run.calibration.ranking, opts.ratio, opts.pattern));
  record("calibrated_trained", rewind_and_train(w0, cfg, run.calibrated_selection, opts.pattern, retrain));
  return run;
}

PilotReport run_pilot(const PilotOptions& opts, std::span<const std::uint64_t> seeds,
                      const std::function<void(const std::string&)>& log) {
  if (seeds.empty()) throw ContractError("run_pilot: at least one seed is required");
  PilotReport report;
  for (std::uint64_t s : seeds) report.runs.push_back(run_pilot_seed(opts, s, log));
  for (const char* name : kPilotVariants) {
    EvalMetrics mean;
    for (const auto& run : report.runs) {
      for (const auto& [variant, m] : run.variants) {
        if (variant != name) continue;
        mean.lm_loss += m.lm_loss;
        mean.short_task_acc += m.short_task_acc;
        mean.long_task_acc += m.long_task_acc;
      }
    }
    const double k = static_cast<double>(report.runs.size());
    mean.lm_loss /= k;
    mean.short_task_acc /= k;
    mean.long_task_acc /= k;
    report.mean.emplace_back(name, mean);
  }
  return report;
}

const EvalMetrics& PilotReport::mean_of(const std::string& variant) const {
  for (const auto& [name, m] : mean) {
    if (name == variant) return m;
  }
  throw ContractError("pilot report has no variant '" + variant + "'");
}

Json to_json(const CalibrationResult& r) {
  return Json{{"alphas", r.alphas}, {"ranking", r.ranking}, {"steps_run", r.steps_run}, {"final_loss", r.final_loss}};
}

CalibrationResult calibration_from_json(const Json& j) {
  data::require_known_keys(j, {"alphas", "ranking", "steps_run", "final_loss"}, "calibration");
  CalibrationResult r;
  try {
    r.alphas = j.at("alphas").get<std::vector<double>>();
    r.ranking = j.at("ranking").get<std::vector<std::size_t>>();
    r.steps_run = j.at("steps_run").get<std::size_t>();
    r.final_loss = j.at("final_loss").get<double>();
  } catch (const Json::exception& e) {
    throw ContractError(std::string("calibration result: ") + e.what());
  }
  std::vector<std::size_t> sorted = r.ranking;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i) throw ContractError("calibration result: ranking is not a permutation");
  }
  if (sorted.size() != r.alphas.size()) throw ContractError("calibration result: ranking and alphas differ in length");
  return r;
}

Json to_json(const EvalMetrics& m) {
  return Json{{"lm_loss", m.lm_loss}, {"short_task_acc", m.short_task_acc}, {"long_task_acc", m.long_task_acc}};
}

Json to_json(const PilotReport& r) {
  Json runs = Json::array();
  std::vector<std::uint64_t> seeds;
  for (const auto& run : r.runs) {
    seeds.push_back(run.seed);
    Json variants = Json::object();
    for (const auto& [name, m] : run.variants) variants[name] = to_json(m);
    runs.push_back(Json{{"seed", run.seed},
                        {"variants", variants},
                        {"calibration", to_json(run.calibration)},
                        {"calibrated_selection", run.calibrated_selection},
                        {"interleaved_selection", run.interleaved_selection}});
  }
  Json mean = Json::object();
  for (const auto& [name, m] : r.mean) mean[name] = to_json(m);
  return Json{{"seeds", seeds}, {"mean", mean}, {"runs", runs}};
}

}  // namespace loza::pipeline
