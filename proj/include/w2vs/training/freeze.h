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


// Which parameters a training step may update, as a function of the step.

#ifndef W2VS_TRAINING_FREEZE_H_
#define W2VS_TRAINING_FREEZE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "w2vs/encoder/model.h"

namespace w2vs::training {

/// Text forms: "none", "output-head-only", "all-except-feature-extractor",
/// "last-<M>-blocks" and "all". last-M-blocks also trains the output head.
struct TrainableSet {
  enum class Kind { kNone, kOutputHeadOnly, kAllExceptFeatureExtractor, kLastBlocks, kAll };
  Kind kind = Kind::kAll;
  int blocks = 0;  // M for kLastBlocks

  std::string ToString() const;
  friend bool operator==(const TrainableSet&, const TrainableSet&) = default;
};

TrainableSet ParseTrainableSet(std::string_view text);

/// Applies to steps below `until_step`; the last phase has none.
struct FreezePhase {
  std::optional<std::int64_t> until_step;
  TrainableSet trainable;

  friend bool operator==(const FreezePhase&, const FreezePhase&) = default;
};

struct FreezePlan {
  std::vector<FreezePhase> phases{FreezePhase{}};

  friend bool operator==(const FreezePlan&, const FreezePlan&) = default;
};

/// Throws ConfigError unless the plan is non-empty, until_step values are
/// positive and strictly increasing, and only the final phase is open.
void ValidateFreezePlan(const FreezePlan& plan);

const TrainableSet& PhaseAt(const FreezePlan& plan, std::int64_t step);

/// Throws TrainingError when last-M-blocks asks for more blocks than exist.
bool IsTrainable(const TrainableSet& set, const encoder::ModelSpec& spec, const std::string& name);

/// Names of the parameters trainable at `step`.
std::set<std::string> ResolveFreeze(const FreezePlan& plan, const encoder::ModelSpec& spec,
                                    std::int64_t step);

}  // namespace w2vs::training

#endif  // W2VS_TRAINING_FREEZE_H_
