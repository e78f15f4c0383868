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


#include "w2vs/training/optimizer.h"

#include <algorithm>
#include <cmath>

#include "w2vs/common/error.h"

namespace w2vs::training {

Adam::Adam(AdamConfig config) : config_(config) {
  if (!(config.beta1 >= 0 && config.beta1 < 1) || !(config.beta2 >= 0 && config.beta2 < 1)) {
    throw ConfigError("optimizer", "", "Adam betas must lie in [0, 1)");
  }
  if (!(config.eps > 0)) throw ConfigError("optimizer.eps", "", "must be positive");
}

void Adam::Update(const std::string& name, num::Tensor& param, const num::Tensor& grad,
                  double lr) {
  if (param.shape() != grad.shape()) {
    throw ShapeError("adam: gradient shape mismatch for '" + name + "'");
  }
  auto [it, fresh] = slots_.try_emplace(name);
  AdamSlot& s = it->second;
  if (fresh) {
    s.m = num::TensorD(param.shape());
    s.v = num::TensorD(param.shape());
  }
  ++s.t;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
    s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
    const double step = lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + config_.eps);
    param[i] = static_cast<float>(param[i] - step);
  }
}

void ValidateLrSchedule(const LrSchedule& s) {
  if (!(s.peak_lr > 0) || !std::isfinite(s.peak_lr)) {
    throw ConfigError("optimizer.lr", "", "must be positive");
  }
  if (!(s.warmup_fraction >= 0) || !(s.hold_fraction >= 0) ||
      !(s.warmup_fraction + s.hold_fraction <= 1)) {
    throw ConfigError("optimizer", "", "warmup and hold fractions must be >= 0 and sum to <= 1");
  }
}

double TriStageLr(const LrSchedule& s, std::int64_t step, std::int64_t total) {
  if (total <= 0 || step < 0 || step >= total) throw Error("lr schedule: step out of range");
  const auto n = static_cast<double>(total);
  const auto warmup = static_cast<std::int64_t>(std::llround(s.warmup_fraction * n));
  const auto hold = static_cast<std::int64_t>(std::llround(s.hold_fraction * n));
  if (step < warmup) return s.peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (step < warmup + hold) return s.peak_lr;
  const std::int64_t decay = std::max<std::int64_t>(total - warmup - hold, 1);
  return s.peak_lr * static_cast<double>(total - step) / static_cast<double>(decay);
}

}  // namespace w2vs::training
