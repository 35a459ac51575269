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
#include <vector>

#include "loza/numerics/tensor.hpp"

namespace loza::num {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  // Global-norm clip; <= 0 disables.
  double clip_norm = 1.0;
};

// Adam over a fixed list of tensors. Tensors without a grad buffer are left
// untouched, so frozen parameters stay bitwise identical.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamOptions opts);

  void step();
  void zero_grad();
  long steps_taken() const { return t_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamOptions opts_;
  long t_ = 0;
};

}  // namespace loza::num
