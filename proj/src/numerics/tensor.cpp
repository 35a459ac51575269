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

#include "loza/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "loza/errors.hpp"

namespace loza::num {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(numel(shape), 0.0) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(shape));
  }
  return shape[axis];
}

double Tensor::item() const {
  if (data.size() != 1) throw ContractError("item() on non-scalar tensor " + to_string(shape));
  return data[0];
}

void Tensor::zero_grad() {
  if (!requires_grad) return;
  if (grad) {
    std::fill(grad->begin(), grad->end(), 0.0);
  } else {
    grad.emplace(data.size(), 0.0);
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

Tensor randn(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& x : t.data) x = dist(rng);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw DimensionError("max_abs_diff: " + to_string(a.shape) + " vs " + to_string(b.shape));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace loza::num
