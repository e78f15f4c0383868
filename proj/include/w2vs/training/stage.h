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


// One training stage: data, the training step, dev evaluation and the loop
// that turns an initial checkpoint into a trained one.

#ifndef W2VS_TRAINING_STAGE_H_
#define W2VS_TRAINING_STAGE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "w2vs/checkpoint/checkpoint.h"
#include "w2vs/encoder/model.h"
#include "w2vs/losses/losses.h"
#include "w2vs/numerics/rng.h"
#include "w2vs/training/freeze.h"
#include "w2vs/training/optimizer.h"

namespace w2vs::training {

enum class Objective { kPretrain, kFinetune, kAdapt };

Objective ParseObjective(std::string_view text);
std::string ObjectiveName(Objective objective);
/// Fine-tuning and adaptation train the output head with frame labels.
inline bool IsSupervised(Objective objective) { return objective != Objective::kPretrain; }

struct InitSpec {
  std::string from = "random";  // "random" or a checkpoint path
  std::vector<checkpoint::SurgeryOp> surgery;
};

struct StageSpec {
  std::string name = "stage";
  Objective objective = Objective::kPretrain;
  InitSpec init;
  encoder::ModelSpec model;  // only read for random init
  std::vector<std::filesystem::path> train;  // manifests, concatenated
  std::vector<std::filesystem::path> dev;
  FreezePlan freeze;
  AdamConfig adam;
  LrSchedule lr;
  std::int64_t steps = 100;
  int batch_size = 8;
  std::int64_t eval_every = 0;  // 0: evaluate after the last step only
  int num_classes = 0;          // head size attached when a supervised init has none
  losses::PretrainLossSpec loss;
  encoder::MaskSpec mask;
  std::uint64_t seed = 0;
};

void ValidateStageSpec(const StageSpec& stage);

/// Loads every utterance of `manifests` at the model's rate, with frame
/// labels when `labels` is set. A corpus at another rate is a hard error.
std::vector<losses::Example> LoadExamples(const std::vector<std::filesystem::path>& manifests,
                                          const encoder::ModelSpec& spec, bool labels);

/// Whole-utterance batches of a fixed size. Each epoch is a fresh seeded
/// permutation; a remainder smaller than the batch is skipped.
class BatchSampler {
 public:
  BatchSampler(std::size_t num_items, int batch_size, std::uint64_t seed);
  std::vector<std::size_t> Next();

 private:
  std::size_t num_items_;
  std::size_t batch_;
  num::CounterRng rng_;
  std::uint64_t epoch_ = 0;
  std::size_t pos_ = 0;
  std::vector<std::size_t> order_;
};

struct StepOptions {
  Objective objective = Objective::kPretrain;
  losses::PretrainLossSpec loss;
  encoder::MaskSpec mask;
};

struct StepMetrics {
  std::int64_t step = 0;
  double loss = 0;
  std::map<std::string, double> terms;
  double lr = 0;
  std::size_t trainable_param_count = 0;
  double masked_fraction = 0;

  nlohmann::json ToJson() const;
};

/// Forward, backward and an Adam update of the tensors trainable at `step`.
/// Frozen tensors and their optimizer slots are left untouched. A non-finite
/// loss or gradient throws TrainingError before anything is updated.
StepMetrics TrainStep(encoder::Model& model, const std::vector<const losses::Example*>& batch,
                      const StepOptions& options, const FreezePlan& plan, Adam& adam,
                      std::int64_t step, double lr, num::CounterRng rng);

/// Supervised objectives report frame-weighted fCE and frame accuracy; the
/// pre-training objective reports its eval-mode loss with a fixed mask seed.
struct EvalMetrics {
  std::int64_t step = 0;
  double loss = 0;
  std::optional<double> accuracy;
  std::size_t frames = 0;

  nlohmann::json ToJson() const;
};

EvalMetrics Evaluate(const encoder::Model& model, const std::vector<losses::Example>& examples,
                     const StepOptions& options, std::uint64_t seed, int batch_size);

/// Initial checkpoint of a stage: random init or a loaded checkpoint, the
/// configured surgery, then a head attached or required per the objective.
checkpoint::Checkpoint PrepareInit(const StageSpec& stage);

struct StageResult {
  checkpoint::Checkpoint checkpoint;
  std::vector<StepMetrics> steps;
  std::vector<EvalMetrics> evals;
};

/// Runs the stage. With a non-empty `out_dir` it writes model.w2vs,
/// metrics.jsonl and eval.jsonl there. Errors carry the stage name.
StageResult RunStage(const StageSpec& stage, const std::filesystem::path& out_dir,
                     std::ostream* log = nullptr);

}  // namespace w2vs::training

#endif  // W2VS_TRAINING_STAGE_H_
