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

#include "loza/data/checkpoint.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "loza/errors.hpp"

namespace loza::data {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  auto bits = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.insert(out.end(), bits.begin(), bits.end());
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::array<std::uint8_t, sizeof(T)> bits{};
  std::memcpy(bits.data(), bytes.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}

void put_tensor_payload(std::vector<std::uint8_t>& out, const num::Tensor& t) {
  for (double x : t.data) put_le(out, x);
}

std::string describe_mismatch(const model::ModelConfig& have, const model::ModelConfig& want) {
  std::ostringstream os;
  auto cmp = [&](const char* name, auto a, auto b) {
    if (a != b) os << ' ' << name << ' ' << a << " (checkpoint) vs " << b << " (expected);";
  };
  cmp("n_layers", have.n_layers, want.n_layers);
  cmp("d_model", have.d_model, want.d_model);
  cmp("n_heads", have.n_heads, want.n_heads);
  cmp("head_dim", have.head_dim, want.head_dim);
  cmp("latent_dim", have.latent_dim.value_or(0), want.latent_dim.value_or(0));
  cmp("ffn_dim", have.ffn_dim, want.ffn_dim);
  cmp("vocab_size", have.vocab_size, want.vocab_size);
  cmp("max_seq_len", have.max_seq_len, want.max_seq_len);
  return os.str();
}

bool same_architecture(const model::ModelConfig& a, const model::ModelConfig& b) {
  model::ModelConfig x = a, y = b;
  x.seed = y.seed = 0;
  return x == y;
}

}  // namespace

Checkpoint Checkpoint::capture(const model::Model& m, Json metadata) {
  Checkpoint c;
  c.config = m.config();
  c.modes = m.modes();
  c.metadata = std::move(metadata);
  for (const auto& [name, t] : m.named_parameters()) {
    num::Tensor copy(t->shape, t->data);
    c.tensors.emplace_back(name, std::move(copy));
  }
  return c;
}

model::Model Checkpoint::restore(const model::ModelConfig* expected) const {
  if (expected != nullptr && !same_architecture(config, *expected)) {
    throw IncompatibilityError("checkpoint does not match the expected model:" + describe_mismatch(config, *expected));
  }
  model::Model m(config);
  auto params = m.named_parameters();
  if (params.size() != tensors.size()) {
    throw IntegrityError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model needs " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = tensors[i];
    if (name != params[i].first || t.shape != params[i].second->shape) {
      throw IntegrityError("checkpoint tensor '" + name + "' " + num::to_string(t.shape) + " does not match '" +
                           params[i].first + "' " + num::to_string(params[i].second->shape));
    }
    params[i].second->data = t.data;
  }
  m.set_modes(modes);
  return m;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Json manifest = Json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    const std::uint64_t nbytes = t.size() * sizeof(double);
    manifest.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  Json modes = Json::array();
  for (const auto& m : ckpt.modes) modes.push_back(to_json(m));
  const Json header{{"config", to_json(ckpt.config)},
                    {"modes", modes},
                    {"tensors", manifest},
                    {"metadata", ckpt.metadata},
                    {"payload_bytes", offset}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out{'L', 'O', 'Z', 'A'};
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : ckpt.tensors) put_tensor_payload(out, t);
  return out;
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kPrefix = 16;
  if (bytes.size() < kPrefix) {
    throw IntegrityError("checkpoint truncated at offset " + std::to_string(bytes.size()) + " (prefix needs 16 bytes)");
  }
  if (std::memcmp(bytes.data(), "LOZA", 4) != 0) throw IntegrityError("bad checkpoint magic at offset 0");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion) {
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version) + " at offset 4");
  }
  const auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - kPrefix) {
    throw IntegrityError("checkpoint header truncated at offset " + std::to_string(bytes.size()) + " (needs " +
                         std::to_string(kPrefix + header_len) + ")");
  }
  Json header;
  try {
    header = Json::parse(bytes.begin() + kPrefix, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
  } catch (const Json::exception& e) {
    throw IntegrityError(std::string("corrupt checkpoint header at offset 16: ") + e.what());
  }

  const std::size_t payload_start = kPrefix + header_len;
  Checkpoint c;
  try {
    c.config = model_config_from_json(header.at("config"));
    for (const auto& m : header.at("modes")) c.modes.push_back(layer_mode_from_json(m));
    c.metadata = header.at("metadata");
    std::uint64_t expect_offset = 0;
    for (const auto& entry : header.at("tensors")) {
      const auto shape = entry.at("shape").get<num::Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
      const std::string name = entry.at("name").get<std::string>();
      if (offset != expect_offset || nbytes != num::numel(shape) * sizeof(double)) {
        throw IntegrityError("manifest entry '" + name + "' has offset " + std::to_string(offset) + " / " +
                             std::to_string(nbytes) + " bytes; expected offset " + std::to_string(expect_offset) +
                             " / " + std::to_string(num::numel(shape) * sizeof(double)) + " bytes");
      }
      if (payload_start + offset + nbytes > bytes.size()) {
        throw IntegrityError("checkpoint payload truncated at offset " + std::to_string(bytes.size()) +
                             " while reading '" + name + "' (needs " +
                             std::to_string(payload_start + offset + nbytes) + ")");
      }
      num::Tensor t(shape);
      for (std::size_t i = 0; i < t.size(); ++i) {
        t.data[i] = get_le<double>(bytes, payload_start + offset + i * sizeof(double));
      }
      c.tensors.emplace_back(name, std::move(t));
      expect_offset += nbytes;
    }
    if (header.at("payload_bytes").get<std::uint64_t>() != expect_offset ||
        bytes.size() != payload_start + expect_offset) {
      throw IntegrityError("checkpoint payload is " + std::to_string(bytes.size() - payload_start) +
                           " bytes, manifest describes " + std::to_string(expect_offset) + " (offset " +
                           std::to_string(payload_start) + ")");
    }
  } catch (const Json::exception& e) {
    throw IntegrityError(std::string("malformed checkpoint header at offset 16: ") + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("invalid config in checkpoint header at offset 16: ") + e.what());
  }
  if (c.modes.size() != c.config.n_layers) {
    throw IntegrityError("checkpoint lists " + std::to_string(c.modes.size()) + " layer modes for " +
                         std::to_string(c.config.n_layers) + " layers");
  }
  return c;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

void save_checkpoint(const model::Model& m, const std::filesystem::path& path, Json metadata) {
  write_checkpoint(Checkpoint::capture(m, std::move(metadata)), path);
}

model::Model load_checkpoint(const std::filesystem::path& path, const model::ModelConfig* expected) {
  return read_checkpoint(path).restore(expected);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string parameter_digest(const model::Model& m, std::span<const std::string> skip) {
  std::vector<std::uint8_t> buf;
  for (const auto& [name, t] : m.named_parameters()) {
    if (std::find(skip.begin(), skip.end(), name) != skip.end()) continue;
    buf.insert(buf.end(), name.begin(), name.end());
    buf.push_back(0);
    for (std::size_t d : t->shape) put_le<std::uint64_t>(buf, d);
    put_tensor_payload(buf, *t);
  }
  return sha256_hex(buf);
}

}  // namespace loza::data
