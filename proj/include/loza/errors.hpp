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

#include <stdexcept>
#include <string>

namespace loza {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes: ContractError and ConfigError -> 1, IntegrityError and IoError
// -> 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Operand shapes do not agree.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// softmax over a row whose entries are all masked out.
class DegenerateRowError : public ContractError {
 public:
  using ContractError::ContractError;
};

class ConfigError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Unknown special token id during detokenization.
class DecodeError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Persisted or cached state is corrupt or inconsistent.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// A checkpoint does not match the configuration it is loaded against.
class IncompatibilityError : public IntegrityError {
 public:
  using IntegrityError::IntegrityError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace loza
