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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "loza/data/json_io.hpp"
#include "loza/model/model.hpp"

namespace loza::data {

// Binary layout, all integers little-endian:
//   "LOZA" | u32 version | u64 header_len | header JSON | payload
// The header holds the model config, layer modes, metadata and a manifest of
// {name, shape, offset, nbytes}; offsets are relative to the payload start
// and the payload is the concatenation of little-endian float64 arrays.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  model::ModelConfig config;
  std::vector<model::LayerMode> modes;
  std::vector<std::pair<std::string, num::Tensor>> tensors;
  Json metadata = Json::object();

  static Checkpoint capture(const model::Model& m, Json metadata = Json::object());

  // Fresh model with these parameters and modes. When expected is given, a
  // different config raises IncompatibilityError.
  model::Model restore(const model::ModelConfig* expected = nullptr) const;
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
// Throws IntegrityError (with the failing byte offset) on malformed input.
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void save_checkpoint(const model::Model& m, const std::filesystem::path& path, Json metadata = Json::object());
model::Model load_checkpoint(const std::filesystem::path& path, const model::ModelConfig* expected = nullptr);

// SHA-256 over the parameter bytes (names and shapes included). Tensors whose
// names appear in skip are left out.
std::string parameter_digest(const model::Model& m, std::span<const std::string> skip = {});
std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace loza::data
