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

#include "loza/data/json_io.hpp"

#include <algorithm>

#include "loza/errors.hpp"

namespace loza::data {
void require_known_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

Json to_json(const attn::SparsePattern& p) {
  return Json{{"sink_blocks", p.sink_blocks}, {"local_blocks", p.local_blocks}, {"block_size", p.block_size}};
}

attn::SparsePattern pattern_from_json(const Json& j, const attn::SparsePattern& defaults) {
  require_known_keys(j, {"sink_blocks", "local_blocks", "block_size"}, "pattern");
  attn::SparsePattern p;
  p.sink_blocks = get_or<std::size_t>(j, "sink_blocks", defaults.sink_blocks, "pattern");
  p.local_blocks = get_or<std::size_t>(j, "local_blocks", defaults.local_blocks, "pattern");
  p.block_size = get_or<std::size_t>(j, "block_size", defaults.block_size, "pattern");
  try {
    p.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("pattern: ") + e.what());
  }
  return p;
}

Json to_json(const model::ModelConfig& cfg) {
  Json j{{"n_layers", cfg.n_layers},       {"d_model", cfg.d_model},   {"n_heads", cfg.n_heads},
         {"head_dim", cfg.head_dim},       {"ffn_dim", cfg.ffn_dim},   {"vocab_size", cfg.vocab_size},
         {"max_seq_len", cfg.max_seq_len}, {"seed", cfg.seed}};
  j["latent_dim"] = cfg.latent_dim ? Json(*cfg.latent_dim) : Json(nullptr);
  return j;
}

model::ModelConfig model_config_from_json(const Json& j, const model::ModelConfig& defaults) {
  require_known_keys(j,
                     {"n_layers", "d_model", "n_heads", "head_dim", "latent_dim", "ffn_dim", "vocab_size",
                      "max_seq_len", "seed"},
                     "model");
  model::ModelConfig c = defaults;
  c.n_layers = get_or(j, "n_layers", c.n_layers, "model");
  c.d_model = get_or(j, "d_model", c.d_model, "model");
  c.n_heads = get_or(j, "n_heads", c.n_heads, "model");
  c.head_dim = get_or(j, "head_dim", c.head_dim, "model");
  c.ffn_dim = get_or(j, "ffn_dim", c.ffn_dim, "model");
  c.vocab_size = get_or(j, "vocab_size", c.vocab_size, "model");
  c.max_seq_len = get_or(j, "max_seq_len", c.max_seq_len, "model");
  c.seed = get_or(j, "seed", c.seed, "model");
  if (j.contains("latent_dim")) {
    if (j["latent_dim"].is_null()) {
      c.latent_dim.reset();
    } else {
      c.latent_dim = get_or<std::size_t>(j, "latent_dim", 0, "model");
    }
  }
  c.validate();
  return c;
}

Json to_json(const model::LayerMode& m) {
  if (std::holds_alternative<model::FullMode>(m)) return Json{{"kind", "full"}};
  if (const auto* s = std::get_if<model::SparseMode>(&m)) return Json{{"kind", "sparse"}, {"pattern", to_json(s->pattern)}};
  const auto& b = std::get<model::BlendedMode>(m);
  return Json{{"kind", "blended"}, {"gate_param", b.gate_param}, {"pattern", to_json(b.pattern)}};
}

model::LayerMode layer_mode_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "full") return model::FullMode{};
  if (kind == "sparse") return model::SparseMode{pattern_from_json(j.at("pattern"))};
  if (kind == "blended") {
    return model::BlendedMode{j.at("gate_param").get<double>(), pattern_from_json(j.at("pattern"))};
  }
  throw IntegrityError("unknown layer mode '" + kind + "'");
}

}  // namespace loza::data
