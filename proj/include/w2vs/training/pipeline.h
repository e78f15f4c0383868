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


// Stage and pipeline configuration documents, and the pipeline runner.
//
// A pipeline document holds a root seed, the default model for random
// initialisation, synthetic corpora and an ordered list of stages. Inside a
// pipeline, "corpus:<name>" names a declared corpus and "stage:<name>" the
// checkpoint written by an earlier stage. A training set given as
// "corpus:a+corpus:b" (or as an array) is the concatenation of the manifests.
// Every seed is derived from the root seed and the corpus or stage name.

#ifndef W2VS_TRAINING_PIPELINE_H_
#define W2VS_TRAINING_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "w2vs/audio/corpus.h"
#include "w2vs/common/json_reader.h"
#include "w2vs/encoder/model.h"
#include "w2vs/training/stage.h"

namespace w2vs::training {

inline constexpr char kCorpusRef[] = "corpus:";
inline constexpr char kStageRef[] = "stage:";

std::uint64_t CorpusSeed(std::uint64_t root_seed, const std::string& name);
std::uint64_t StageSeed(std::uint64_t root_seed, const std::string& name);

/// Corpus keys: num_utterances, min_duration_s, max_duration_s, sample_rate,
/// profile {num_classes, freq_lo_hz, freq_hi_hz, amplitude, noise_level,
/// freq_jitter, band_limit, min_segment_s, max_segment_s}.
audio::CorpusSpec CorpusSpecFromJson(JsonReader r, const std::string& name, std::uint64_t seed);

/// Stage keys: name, objective, init ("random" | reference | {from, surgery}),
/// train, dev, steps, batch_size, eval_every, num_classes, freeze
/// [{until, trainable}], optimizer {lr, beta1, beta2, eps, warmup, hold},
/// loss {num_distractors, temperature, diversity_weight}, mask {start_prob,
/// span}. Relative paths resolve against `base_dir`; corpus and stage
/// references are kept verbatim.
StageSpec StageSpecFromJson(JsonReader r, const encoder::ModelSpec& model,
                            const std::filesystem::path& base_dir);

/// A single-stage document: the stage keys plus optional "model" and "seed".
/// `objective` must match the document's objective when it names one.
StageSpec LoadStageConfig(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                          Objective objective, std::optional<std::uint64_t> seed);

struct PipelineSpec {
  std::string name = "pipeline";
  std::uint64_t seed = 0;
  std::vector<audio::CorpusSpec> corpora;
  std::vector<StageSpec> stages;
};

/// Keys: name, seed, model, corpora {name: corpus}, stage_defaults (merged
/// into every stage), stages. `seed` replaces the document's seed.
PipelineSpec PipelineSpecFromJson(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                  std::optional<std::uint64_t> seed = std::nullopt);

struct StageSummary {
  std::string name;
  std::string objective;
  std::filesystem::path checkpoint;
  std::string payload_fnv1a64;
  double final_train_loss = 0;
  std::optional<EvalMetrics> final_eval;
};

/// Synthesises the corpora under <run_dir>/corpora/<name>, then runs each
/// stage into <run_dir>/<stage name>/ and writes <run_dir>/summary.json.
std::vector<StageSummary> RunPipeline(const PipelineSpec& pipeline,
                                      const std::filesystem::path& run_dir,
                                      std::ostream* log = nullptr);

nlohmann::json SummaryJson(const PipelineSpec& pipeline, const std::vector<StageSummary>& stages);

}  // namespace w2vs::training

#endif  // W2VS_TRAINING_PIPELINE_H_
