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

#include "loza/numerics/optim.hpp"

#include <cmath>

namespace loza::num {

Adam::Adam(std::vector<Tensor*> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Tensor* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  double scale = 1.0;
  if (opts_.clip_norm > 0.0) {
    double sq = 0.0;
    for (Tensor* p : params_) {
      if (!p->grad) continue;
      for (double g : *p->grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > opts_.clip_norm) scale = opts_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor* p = params_[k];
    if (!p->requires_grad || !p->grad) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    const auto& g = *p->grad;
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * gi;
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * gi * gi;
      p->data[i] -= opts_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opts_.eps);
    }
  }
}

}  // namespace loza::num
