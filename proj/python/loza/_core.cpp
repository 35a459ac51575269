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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "loza/attention/attention.hpp"
#include "loza/cli/commands.hpp"
#include "loza/costmodel/costmodel.hpp"
#include "loza/data/checkpoint.hpp"
#include "loza/data/tasks.hpp"
#include "loza/data/tokenizer.hpp"
#include "loza/errors.hpp"
#include "loza/model/model.hpp"
#include "loza/pipeline/pipeline.hpp"
#include "loza/runtime/runtime.hpp"

namespace py = pybind11;
using namespace loza;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const num::Tensor& t) {
  Array a(std::vector<py::ssize_t>(t.shape.begin(), t.shape.end()));
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

num::Tensor from_numpy(const Array& a) {
  num::Shape shape(a.shape(), a.shape() + a.ndim());
  return num::Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

// Q, K, V as {n, heads, head_dim}; pattern None means full causal attention.
Array attention(const Array& q, const Array& k, const Array& v, const std::optional<attn::SparsePattern>& pattern) {
  if (q.ndim() != 3) throw DimensionError("attention: q must be {n, heads, head_dim}");
  num::Graph g(false);
  const num::Var vq = g.constant(from_numpy(q)), vk = g.constant(from_numpy(k)), vv = g.constant(from_numpy(v));
  return to_numpy(pattern ? attn::streaming_sparse_attention(vq, vk, vv, *pattern).value()
                          : attn::full_attention(vq, vk, vv).value());
}

py::array_t<bool> streaming_mask(std::size_t n, const attn::SparsePattern& p) {
  const attn::AttnMask mask = attn::AttnMask::streaming(n, p);
  py::array_t<bool> out({n, n});
  auto r = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) r(i, j) = mask.allowed(i, j);
  return out;
}

py::tuple run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"loza"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return py::make_tuple(code, out.str(), err.str());
}

cost::AttnKind kind_of(bool sparse) { return sparse ? cost::AttnKind::kSparse : cost::AttnKind::kFull; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Streaming-sparse attention lab: masks, toy model, calibration, decode and cost model.";

  auto base = py::register_exception<Error>(m, "LozaError", PyExc_RuntimeError);
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<attn::SparsePattern>(m, "SparsePattern")
      .def(py::init([](std::size_t s, std::size_t l, std::size_t b) {
             attn::SparsePattern p{s, l, b};
             p.validate();
             return p;
           }),
           py::arg("sink_blocks") = 1, py::arg("local_blocks") = 7, py::arg("block_size") = 128)
      .def_readwrite("sink_blocks", &attn::SparsePattern::sink_blocks)
      .def_readwrite("local_blocks", &attn::SparsePattern::local_blocks)
      .def_readwrite("block_size", &attn::SparsePattern::block_size)
      .def_property_readonly("window_tokens", &attn::SparsePattern::window_tokens)
      .def("__eq__", [](const attn::SparsePattern& a, const attn::SparsePattern& b) { return a == b; })
      .def("__repr__", [](const attn::SparsePattern& p) {
        return "SparsePattern(" + std::to_string(p.sink_blocks) + ", " + std::to_string(p.local_blocks) + ", " +
               std::to_string(p.block_size) + ")";
      });

  m.def("streaming_mask", &streaming_mask, py::arg("n"), py::arg("pattern"),
        "Boolean n x n visibility matrix of the streaming pattern.");
  m.def("attention", &attention, py::arg("q"), py::arg("k"), py::arg("v"), py::arg("pattern") = py::none(),
        "Causal attention over {n, heads, head_dim} arrays; sparse when a pattern is given.");

  py::class_<model::ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("n_layers", &model::ModelConfig::n_layers)
      .def_readwrite("d_model", &model::ModelConfig::d_model)
      .def_readwrite("n_heads", &model::ModelConfig::n_heads)
      .def_readwrite("head_dim", &model::ModelConfig::head_dim)
      .def_readwrite("latent_dim", &model::ModelConfig::latent_dim)
      .def_readwrite("ffn_dim", &model::ModelConfig::ffn_dim)
      .def_readwrite("vocab_size", &model::ModelConfig::vocab_size)
      .def_readwrite("max_seq_len", &model::ModelConfig::max_seq_len)
      .def_readwrite("seed", &model::ModelConfig::seed)
      .def("validate", &model::ModelConfig::validate);

  py::class_<model::Model>(m, "Model")
      .def(py::init([](const model::ModelConfig& c) { return model::build_model(c); }), py::arg("config"))
      .def_property_readonly("config", &model::Model::config)
      .def("modes", [](const model::Model& mm) {
        std::vector<std::string> out;
        for (const auto& mode : mm.modes()) out.push_back(model::describe(mode));
        return out;
      })
      .def("set_full", [](model::Model& mm, std::size_t layer) { mm.set_mode(layer, model::FullMode{}); })
      .def("set_sparse", [](model::Model& mm, std::size_t layer,
                            const attn::SparsePattern& p) { mm.set_mode(layer, model::SparseMode{p}); })
      .def("set_blended", [](model::Model& mm, std::size_t layer, double gate, const attn::SparsePattern& p) {
        mm.set_mode(layer, model::BlendedMode{gate, p});
      })
      .def("logits", [](const model::Model& mm, const std::vector<int>& tokens) {
        return to_numpy(model::logits(mm, tokens));
      })
      .def("lm_loss", [](const model::Model& mm, const std::vector<int>& tokens) {
        return model::lm_loss_value(mm, tokens);
      })
      .def("digest", [](const model::Model& mm) { return data::parameter_digest(mm); })
      .def("save", [](const model::Model& mm, const std::filesystem::path& p) { data::save_checkpoint(mm, p); })
      .def_static("load", [](const std::filesystem::path& p) { return data::load_checkpoint(p); });

  m.def("greedy_decode", [](const model::Model& mm, const std::vector<int>& prompt, std::size_t steps) {
    const runtime::GreedyTrace t = runtime::greedy_decode(mm, prompt, steps);
    std::vector<Array> logits;
    for (const auto& l : t.logits) logits.push_back(to_numpy(l));
    return py::make_tuple(t.tokens, logits, t.rows_read);
  }, py::arg("model"), py::arg("prompt"), py::arg("steps"),
        "Incremental greedy decode; returns (tokens, per-step logits, per-step per-layer KV rows read).");

  m.def("byte_tokenize", &data::byte_tokenize);
  m.def("detokenize", [](const std::vector<int>& ids) { return py::bytes(data::detokenize(ids)); });
  m.def("gen_passkey", [](std::size_t seq_len, std::size_t distance, std::uint64_t seed, std::size_t value_len,
                          std::size_t distractors) {
    const auto t = data::gen_passkey({data::TaskKind::kPasskey, seq_len, distance, seed, value_len, distractors});
    py::dict d;
    d["tokens"] = t.tokens;
    d["answer_positions"] = t.answer_positions;
    d["answer"] = t.answer;
    d["key_position"] = t.key_position;
    d["value_position"] = t.value_position;
    d["query_position"] = t.query_position;
    return d;
  }, py::arg("seq_len"), py::arg("distance"), py::arg("seed") = 0, py::arg("value_len") = 1,
        py::arg("distractors") = 0);

  m.def("calibrate", [](model::Model& mm, std::size_t n_sequences, std::size_t seq_len, std::uint64_t seed,
                        std::size_t steps, double lr, const attn::SparsePattern& p) {
    const auto data = pipeline::Corpus({.seq_len = seq_len}, seed).take(n_sequences);
    const auto r = pipeline::calibrate(mm, data, {.steps = steps, .lr = lr, .pattern = p});
    return py::make_tuple(r.alphas, r.ranking);
  }, py::arg("model"), py::arg("n_sequences"), py::arg("seq_len"), py::arg("seed"), py::arg("steps"),
        py::arg("lr"), py::arg("pattern"), "Gate calibration on passkey data; returns (alphas, ranking).");
  m.def("interleaved_pattern", &pipeline::interleaved_pattern);

  m.def("decode_kv_reads", [](std::uint64_t t, bool sparse, const attn::SparsePattern& p) {
    return cost::decode_kv_reads(t, kind_of(sparse), p);
  }, py::arg("context_len"), py::arg("sparse"), py::arg("pattern"));
  m.def("allowed_keys_total", [](std::uint64_t n, bool sparse, const attn::SparsePattern& p) {
    return cost::allowed_keys_total(n, kind_of(sparse), p);
  }, py::arg("n"), py::arg("sparse"), py::arg("pattern"));
  m.def("prefill_flops_ratio", [](std::uint64_t n, std::size_t n_layers, double sparse_fraction, std::size_t heads,
                                  std::size_t head_dim, const attn::SparsePattern& p) {
    const auto mixed = cost::mixed_kinds(n_layers, sparse_fraction);
    const auto full = cost::mixed_kinds(n_layers, 0.0);
    const cost::AttnShape shape{heads, head_dim};
    return double(cost::prefill_attention_flops(n, mixed, shape, p).total) /
           double(cost::prefill_attention_flops(n, full, shape, p).total);
  }, py::arg("n"), py::arg("n_layers"), py::arg("sparse_fraction"), py::arg("n_heads"), py::arg("head_dim"),
        py::arg("pattern"));

  m.def("run_cli", &run_cli, py::arg("args"), "Runs the loza CLI in-process; returns (exit_code, stdout, stderr).");
}
