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

#include "loza/data/tokenizer.hpp"

#include "loza/errors.hpp"

namespace loza::data {

std::vector<int> byte_tokenize(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<unsigned char>(c));
  return ids;
}

std::string detokenize(std::span<const int> ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id >= 0 && id < 256) {
      out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
      continue;
    }
    switch (id) {
      case kKeyToken: out += "<key>"; break;
      case kQueryToken: out += "<query>"; break;
      case kCopyToken: out += "<copy>"; break;
      case kPadToken: out += "<pad>"; break;
      default: throw DecodeError("detokenize: unknown token id " + std::to_string(id));
    }
  }
  return out;
}

}  // namespace loza::data
