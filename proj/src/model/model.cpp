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

#include "loza/model/model.hpp"

#include <cmath>
#include <random>

#include "loza/errors.hpp"
#include "loza/numerics/ops.hpp"

namespace loza::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (n_layers == 0 || d_model == 0 || n_heads == 0 || head_dim == 0 || ffn_dim == 0 ||
      vocab_size == 0 || max_seq_len == 0) {
    fail("all dimensions must be >= 1");
  }
  if (n_heads * head_dim != d_model) {
    fail("n_heads * head_dim (" + std::to_string(n_heads * head_dim) + ") must equal d_model (" +
         std::to_string(d_model) + ")");
  }
  if (latent_dim && (*latent_dim == 0 || *latent_dim > d_model)) {
    fail("latent_dim must be in [1, d_model]");
  }
}

double BlendedMode::alpha() const {
  return gate_param >= 0.0 ? 1.0 / (1.0 + std::exp(-gate_param))
                           : std::exp(gate_param) / (1.0 + std::exp(gate_param));
}

bool is_sparse(const LayerMode& m) { return std::holds_alternative<SparseMode>(m); }

std::string describe(const LayerMode& m) {
  if (std::holds_alternative<FullMode>(m)) return "full";
  if (std::holds_alternative<SparseMode>(m)) return "sparse";
  return "blended";
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t d = cfg_.d_model, width = cfg_.n_heads * cfg_.head_dim;
  tok_emb = Tensor({cfg_.vocab_size, d});
  pos_emb = Tensor({cfg_.max_seq_len, d});
  layers.resize(cfg_.n_layers);
  for (LayerWeights& l : layers) {
    l.attn_norm = Tensor({d});
    l.wq = Tensor({d, width});
    if (cfg_.latent_dim) {
      l.w_down = Tensor({d, *cfg_.latent_dim});
      l.w_uk = Tensor({*cfg_.latent_dim, width});
      l.w_uv = Tensor({*cfg_.latent_dim, width});
    } else {
      l.wk = Tensor({d, width});
      l.wv = Tensor({d, width});
    }
    l.wo = Tensor({width, d});
    l.ffn_norm = Tensor({d});
    l.w_in = Tensor({d, cfg_.ffn_dim});
    l.w_out = Tensor({cfg_.ffn_dim, d});
  }
  final_norm = Tensor({d});
  head = Tensor({d, cfg_.vocab_size});
  modes_.assign(cfg_.n_layers, FullMode{});
}

void Model::set_mode(std::size_t layer, LayerMode m) {
  if (layer >= modes_.size()) {
    throw ContractError("layer " + std::to_string(layer) + " out of range (" + std::to_string(modes_.size()) +
                        " layers)");
  }
  if (const auto* s = std::get_if<SparseMode>(&m)) s->pattern.validate();
  if (const auto* b = std::get_if<BlendedMode>(&m)) b->pattern.validate();
  modes_[layer] = m;
}

void Model::set_modes(std::vector<LayerMode> modes) {
  if (modes.size() != cfg_.n_layers) {
    throw ContractError("got " + std::to_string(modes.size()) + " layer modes for " +
                        std::to_string(cfg_.n_layers) + " layers");
  }
  for (std::size_t i = 0; i < modes.size(); ++i) set_mode(i, modes[i]);
}

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("tok_emb", &tok_emb);
  out.emplace_back("pos_emb", &pos_emb);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerWeights& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    out.emplace_back(p + "attn_norm", &l.attn_norm);
    out.emplace_back(p + "wq", &l.wq);
    if (cfg_.latent_dim) {
      out.emplace_back(p + "w_down", &l.w_down);
      out.emplace_back(p + "w_uk", &l.w_uk);
      out.emplace_back(p + "w_uv", &l.w_uv);
    } else {
      out.emplace_back(p + "wk", &l.wk);
      out.emplace_back(p + "wv", &l.wv);
    }
    out.emplace_back(p + "wo", &l.wo);
    out.emplace_back(p + "ffn_norm", &l.ffn_norm);
    out.emplace_back(p + "w_in", &l.w_in);
    out.emplace_back(p + "w_out", &l.w_out);
  }
  out.emplace_back("final_norm", &final_norm);
  out.emplace_back("head", &head);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Model::named_parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<Model*>(this)->named_parameters()) out.emplace_back(name, t);
  return out;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void Model::set_trainable(bool trainable) {
  for (Tensor* t : parameters()) {
    t->requires_grad = trainable;
    if (!trainable) t->grad.reset();
  }
}

bool Model::all_finite() const {
  for (const auto& [name, t] : named_parameters()) {
    if (!t->all_finite()) return false;
  }
  return true;
}

Model build_model(const ModelConfig& cfg) {
  Model m(cfg);
  std::mt19937_64 rng(cfg.seed);
  for (auto& [name, t] : m.named_parameters()) {
    if (name.ends_with("norm")) {
      std::fill(t->data.begin(), t->data.end(), 1.0);
    } else {
      *t = num::randn(t->shape, 0.02, rng);
    }
  }
  return m;
}

Var embed(Graph& g, const Model& m, std::span<const int> tokens, std::size_t start_pos) {
  const ModelConfig& cfg = m.config();
  if (tokens.empty()) throw ContractError("forward: empty token sequence");
  if (start_pos + tokens.size() > cfg.max_seq_len) {
    throw ContractError("forward: " + std::to_string(start_pos + tokens.size()) +
                        " positions exceed max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  std::vector<int> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(start_pos + i);
  return num::add(num::embedding(g.parameter(m.tok_emb), tokens),
                  num::embedding(g.parameter(m.pos_emb), positions));
}

attn::Qkv layer_qkv(Graph& g, const Model& m, std::size_t layer, Var x) {
  const ModelConfig& cfg = m.config();
  const LayerWeights& w = m.layers.at(layer);
  const std::size_t n = x.shape()[0];
  Var h = num::rmsnorm(x, g.parameter(w.attn_norm));
  if (m.uses_mla()) {
    return attn::mla_lite_project(h, g.parameter(w.w_down), g.parameter(w.w_uk), g.parameter(w.w_uv),
                                  g.parameter(w.wq), cfg.n_heads, cfg.head_dim);
  }
  const num::Shape per_head{n, cfg.n_heads, cfg.head_dim};
  return {num::reshape(num::matmul(h, g.parameter(w.wq)), per_head),
          num::reshape(num::matmul(h, g.parameter(w.wk)), per_head),
          num::reshape(num::matmul(h, g.parameter(w.wv)), per_head)};
}

Var layer_attention(Graph& g, const Model& m, std::size_t layer, const attn::Qkv& qkv,
                    const ForwardOptions& opts) {
  const LayerMode& mode = m.mode(layer);
  if (std::holds_alternative<FullMode>(mode)) return attn::full_attention(qkv.q, qkv.k, qkv.v, opts.path);
  if (const auto* s = std::get_if<SparseMode>(&mode)) {
    return attn::streaming_sparse_attention(qkv.q, qkv.k, qkv.v, s->pattern, opts.path);
  }
  const auto& b = std::get<BlendedMode>(mode);
  Var gate = g.variable(Tensor::scalar(b.gate_param), opts.trainable_gates);
  if (opts.gate_vars != nullptr) {
    opts.gate_vars->resize(m.config().n_layers);
    (*opts.gate_vars)[layer] = gate;
  }
  Var alpha = num::sigmoid(gate);
  return attn::blend(attn::full_attention(qkv.q, qkv.k, qkv.v, opts.path),
                     attn::streaming_sparse_attention(qkv.q, qkv.k, qkv.v, b.pattern, opts.path), alpha);
}

Var layer_finish(Graph& g, const Model& m, std::size_t layer, Var x, Var attn_out) {
  const LayerWeights& w = m.layers.at(layer);
  const std::size_t n = x.shape()[0];
  Var merged = num::reshape(attn_out, {n, m.config().d_model});
  x = num::add(x, num::matmul(merged, g.parameter(w.wo)));
  Var h = num::rmsnorm(x, g.parameter(w.ffn_norm));
  Var ff = num::matmul(num::gelu(num::matmul(h, g.parameter(w.w_in))), g.parameter(w.w_out));
  return num::add(x, ff);
}

Var output_logits(Graph& g, const Model& m, Var x) {
  return num::matmul(num::rmsnorm(x, g.parameter(m.final_norm)), g.parameter(m.head));
}

Var forward(Graph& g, const Model& m, std::span<const int> tokens, const ForwardOptions& opts) {
  Var x = embed(g, m, tokens, 0);
  for (std::size_t l = 0; l < m.config().n_layers; ++l) {
    const attn::Qkv qkv = layer_qkv(g, m, l, x);
    x = layer_finish(g, m, l, x, layer_attention(g, m, l, qkv, opts));
  }
  return output_logits(g, m, x);
}

Var lm_loss(Graph& g, const Model& m, std::span<const int> tokens, const ForwardOptions& opts) {
  if (tokens.size() < 2) throw ContractError("lm_loss needs at least 2 tokens");
  Var out = forward(g, m, tokens, opts);
  return num::cross_entropy(num::slice_rows(out, 0, tokens.size() - 1), tokens.subspan(1));
}

Var distill_loss(Graph& g, const Model& m, std::span<const int> tokens, const Tensor& teacher_logits,
                 const ForwardOptions& opts) {
  return num::mse(forward(g, m, tokens, opts), teacher_logits);
}

Tensor logits(const Model& m, std::span<const int> tokens) {
  Graph g(false);
  Tensor out = forward(g, m, tokens).value();
  out.requires_grad = false;
  out.grad.reset();
  return out;
}

double lm_loss_value(const Model& m, std::span<const int> tokens) {
  Graph g(false);
  return lm_loss(g, m, tokens).value().item();
}

}  // namespace loza::model
