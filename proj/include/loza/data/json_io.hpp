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

#include <initializer_list>
#include <string>

#include "json.hpp"
#include "loza/attention/pattern.hpp"
#include "loza/errors.hpp"
#include "loza/model/model.hpp"

// JSON encodings shared by the checkpoint header and the experiment config.
namespace loza::data {

using Json = nlohmann::json;

// j[key] as T, or fallback when absent; type mismatches raise ConfigError.
template <typename T>
T get_or(const Json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

// Throws ConfigError naming the first key of obj not in allowed.
void require_known_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where);

Json to_json(const attn::SparsePattern& p);
attn::SparsePattern pattern_from_json(const Json& j, const attn::SparsePattern& defaults = {});

Json to_json(const model::ModelConfig& cfg);
model::ModelConfig model_config_from_json(const Json& j, const model::ModelConfig& defaults = {});

Json to_json(const model::LayerMode& m);
model::LayerMode layer_mode_from_json(const Json& j);

}  // namespace loza::data
