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
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "loza/attention/attention.hpp"
#include "loza/attention/mla.hpp"
#include "loza/numerics/graph.hpp"

namespace loza::model {

using attn::SparsePattern;
using num::Graph;
using num::Tensor;
using num::Var;

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t d_model = 16;
  std::size_t n_heads = 2;
  std::size_t head_dim = 8;
  // Set => attention layers use MLA-lite projections with this latent width.
  std::optional<std::size_t> latent_dim;
  std::size_t ffn_dim = 32;
  std::size_t vocab_size = 260;
  std::size_t max_seq_len = 64;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct FullMode {
  bool operator==(const FullMode&) const = default;
};

struct SparseMode {
  SparsePattern pattern;
  bool operator==(const SparseMode&) const = default;
};

// Calibration blend; the effective gate is sigmoid(gate_param).
struct BlendedMode {
  double gate_param = 0.0;
  SparsePattern pattern;

  double alpha() const;
  bool operator==(const BlendedMode&) const = default;
};

using LayerMode = std::variant<FullMode, SparseMode, BlendedMode>;

bool is_sparse(const LayerMode& m);
std::string describe(const LayerMode& m);

struct LayerWeights {
  Tensor attn_norm;  // d
  Tensor wq;         // d x (h*hd)
  Tensor wk, wv;     // d x (h*hd); standard projections only
  Tensor w_down;     // d x latent; MLA-lite only
  Tensor w_uk, w_uv; // latent x (h*hd); MLA-lite only
  Tensor wo;         // (h*hd) x d
  Tensor ffn_norm;   // d
  Tensor w_in;       // d x ffn
  Tensor w_out;      // ffn x d
};

// Toy pre-norm decoder-only transformer. Each attention layer carries its own
// LayerMode; changing modes never touches parameter values.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  bool uses_mla() const { return cfg_.latent_dim.has_value(); }

  const std::vector<LayerMode>& modes() const { return modes_; }
  const LayerMode& mode(std::size_t layer) const { return modes_.at(layer); }
  void set_mode(std::size_t layer, LayerMode m);
  // Throws ContractError unless modes.size() == n_layers.
  void set_modes(std::vector<LayerMode> modes);

  Tensor tok_emb;     // vocab x d
  Tensor pos_emb;     // max_seq_len x d
  std::vector<LayerWeights> layers;
  Tensor final_norm;  // d
  Tensor head;        // d x vocab

  // Every parameter in a fixed order with a stable dotted name.
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;
  std::vector<Tensor*> parameters();

  void set_trainable(bool trainable);
  bool all_finite() const;

 private:
  ModelConfig cfg_;
  std::vector<LayerMode> modes_;
};

// Seeded Gaussian init (std 0.02), unit norm gains, all layers Full.
Model build_model(const ModelConfig& cfg);

struct ForwardOptions {
  // Blended layers bind their gate as a graph variable; this marks it
  // trainable.
  bool trainable_gates = false;
  // When set, resized to n_layers; entry i holds layer i's gate variable
  // (unset for non-Blended layers).
  std::vector<Var>* gate_vars = nullptr;
  attn::AttentionPath path = attn::AttentionPath::kEfficient;
};

// Per-layer building blocks, shared with the incremental runtime.
Var embed(Graph& g, const Model& m, std::span<const int> tokens, std::size_t start_pos);
attn::Qkv layer_qkv(Graph& g, const Model& m, std::size_t layer, Var x);
Var layer_attention(Graph& g, const Model& m, std::size_t layer, const attn::Qkv& qkv,
                    const ForwardOptions& opts);
// Output projection, residual add and the feed-forward sub-block.
Var layer_finish(Graph& g, const Model& m, std::size_t layer, Var x, Var attn_out);
Var output_logits(Graph& g, const Model& m, Var x);

// Logits {n, vocab}. n <= max_seq_len, ids < vocab_size.
Var forward(Graph& g, const Model& m, std::span<const int> tokens, const ForwardOptions& opts = {});

// Mean next-token cross-entropy over positions 0..n-2. Needs n >= 2.
Var lm_loss(Graph& g, const Model& m, std::span<const int> tokens, const ForwardOptions& opts = {});

// Mean squared error between the model's logits and teacher logits.
Var distill_loss(Graph& g, const Model& m, std::span<const int> tokens, const Tensor& teacher_logits,
                 const ForwardOptions& opts = {});

// Graph-free conveniences.
Tensor logits(const Model& m, std::span<const int> tokens);
double lm_loss_value(const Model& m, std::span<const int> tokens);

}  // namespace loza::model
