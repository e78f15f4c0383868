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


#include "w2vs/training/freeze.h"

#include <charconv>

#include "w2vs/common/error.h"

namespace w2vs::training {

std::string TrainableSet::ToString() const {
  switch (kind) {
    case Kind::kNone: return "none";
    case Kind::kOutputHeadOnly: return "output-head-only";
    case Kind::kAllExceptFeatureExtractor: return "all-except-feature-extractor";
    case Kind::kLastBlocks: return "last-" + std::to_string(blocks) + "-blocks";
    case Kind::kAll: return "all";
  }
  return "?";
}

TrainableSet ParseTrainableSet(std::string_view text) {
  using Kind = TrainableSet::Kind;
  if (text == "none") return {Kind::kNone, 0};
  if (text == "output-head-only") return {Kind::kOutputHeadOnly, 0};
  if (text == "all-except-feature-extractor") return {Kind::kAllExceptFeatureExtractor, 0};
  if (text == "all") return {Kind::kAll, 0};
  constexpr std::string_view kPrefix = "last-", kSuffix = "-blocks";
  if (text.starts_with(kPrefix) && text.ends_with(kSuffix) &&
      text.size() > kPrefix.size() + kSuffix.size()) {
    const std::string_view digits =
        text.substr(kPrefix.size(), text.size() - kPrefix.size() - kSuffix.size());
    int m = 0;
    const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), m);
    if (ec == std::errc() && end == digits.data() + digits.size() && m >= 0) {
      return {Kind::kLastBlocks, m};
    }
  }
  throw Error("unknown trainable set '" + std::string(text) +
              "' (expected none, output-head-only, all-except-feature-extractor, "
              "last-<M>-blocks or all)");
}

void ValidateFreezePlan(const FreezePlan& plan) {
  if (plan.phases.empty()) throw ConfigError("freeze", "", "freeze plan has no phases");
  std::int64_t previous = 0;
  for (std::size_t i = 0; i < plan.phases.size(); ++i) {
    const auto& until = plan.phases[i].until_step;
    const std::string path = "freeze[" + std::to_string(i) + "]";
    const bool last = i + 1 == plan.phases.size();
    if (last && until) throw ConfigError(path + ".until", "", "the final phase must be open-ended");
    if (!last && !until) throw ConfigError(path + ".until", "", "only the final phase may omit 'until'");
    if (until && *until <= previous) {
      throw ConfigError(path + ".until", "", "until steps must be positive and strictly increasing");
    }
    if (until) previous = *until;
  }
}

const TrainableSet& PhaseAt(const FreezePlan& plan, std::int64_t step) {
  if (step < 0) throw Error("negative step");
  for (const FreezePhase& phase : plan.phases) {
    if (!phase.until_step || step < *phase.until_step) return phase.trainable;
  }
  throw ConfigError("freeze", "", "freeze plan has no phase for step " + std::to_string(step));
}

bool IsTrainable(const TrainableSet& set, const encoder::ModelSpec& spec, const std::string& name) {
  using Kind = TrainableSet::Kind;
  switch (set.kind) {
    case Kind::kNone: return false;
    case Kind::kAll: return true;
    case Kind::kOutputHeadOnly: return encoder::IsHead(name);
    case Kind::kAllExceptFeatureExtractor: return !encoder::IsFeatureExtractor(name);
    case Kind::kLastBlocks: {
      const int n = spec.encoder.num_blocks;
      if (set.blocks > n) {
        throw TrainingError("freeze: " + set.ToString() + " but the model has only " +
                            std::to_string(n) + " blocks");
      }
      const int block = encoder::BlockIndexOf(name);
      return encoder::IsHead(name) || (block > 0 && block > n - set.blocks);
    }
  }
  return false;
}

std::set<std::string> ResolveFreeze(const FreezePlan& plan, const encoder::ModelSpec& spec,
                                    std::int64_t step) {
  const TrainableSet& set = PhaseAt(plan, step);
  std::set<std::string> out;
  for (const auto& [name, shape] : encoder::ParamShapes(spec)) {
    if (IsTrainable(set, spec, name)) out.insert(name);
  }
  return out;
}

}  // namespace w2vs::training
