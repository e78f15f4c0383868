// Copyright 2026 The w2vs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Adam and the tri-stage learning-rate schedule.

#ifndef W2VS_TRAINING_OPTIMIZER_H_
#define W2VS_TRAINING_OPTIMIZER_H_

#include <cstdint>
#include <map>
#include <string>

#include "w2vs/numerics/tensor.h"

namespace w2vs::training {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

/// Moments live in double precision. `t` counts this tensor's own updates,
/// so a tensor that was frozen for a while still gets full bias correction.
struct AdamSlot {
  num::TensorD m;
  num::TensorD v;
  std::int64_t t = 0;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// One textbook Adam update of `param`; creates the slot on first use.
  void Update(const std::string& name, num::Tensor& param, const num::Tensor& grad, double lr);

  const AdamConfig& config() const { return config_; }
  const std::map<std::string, AdamSlot>& slots() const { return slots_; }

 private:
  AdamConfig config_;
  std::map<std::string, AdamSlot> slots_;
};

/// Linear warmup over the first warmup fraction of the steps, a constant
/// hold, then linear decay to zero over the rest (the last step keeps a
/// small positive rate).
struct LrSchedule {
  double peak_lr = 5e-4;
  double warmup_fraction = 0.1;
  double hold_fraction = 0.4;
};

void ValidateLrSchedule(const LrSchedule& schedule);

double TriStageLr(const LrSchedule& schedule, std::int64_t step, std::int64_t total_steps);

}  // namespace w2vs::training

#endif  // W2VS_TRAINING_OPTIMIZER_H_
