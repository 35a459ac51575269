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

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace loza::data {

// Byte-level vocabulary: ids 0..255 are raw bytes, specials follow.
inline constexpr int kKeyToken = 256;
inline constexpr int kQueryToken = 257;
inline constexpr int kCopyToken = 258;
inline constexpr int kPadToken = 259;
inline constexpr int kVocabSize = 260;

std::vector<int> byte_tokenize(std::string_view text);

// Specials render as <key>, <query>, <copy>, <pad>. Ids outside the
// vocabulary raise DecodeError.
std::string detokenize(std::span<const int> ids);

}  // namespace loza::data
