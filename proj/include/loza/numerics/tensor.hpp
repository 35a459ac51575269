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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace loza::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major tensor of 64-bit floats.
//
// Invariants: numel(shape) == data.size(); grad, when present, has
// data.size() elements. Parameters that are frozen never get a grad buffer.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const;
  bool is_scalar() const { return data.size() == 1; }

  double item() const;
  double at(std::size_t r, std::size_t c) const { return data[r * shape.back() + c]; }
  double& at(std::size_t r, std::size_t c) { return data[r * shape.back() + c]; }

  // Allocates (or clears) the grad buffer; no-op for frozen tensors.
  void zero_grad();
  bool all_finite() const;
};

// Gaussian initialization; draws are consumed in row-major order.
Tensor randn(Shape shape, double stddev, std::mt19937_64& rng);

// Max |a - b| over equal-shaped tensors.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace loza::num
