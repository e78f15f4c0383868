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


#include "w2vs/training/stage.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <utility>

#include "w2vs/audio/alignment.h"
#include "w2vs/audio/corpus.h"
#include "w2vs/common/error.h"
#include "w2vs/numerics/graph.h"
#include "w2vs/numerics/param_store.h"

namespace w2vs::training {

Objective ParseObjective(std::string_view text) {
  if (text == "pretrain") return Objective::kPretrain;
  if (text == "finetune") return Objective::kFinetune;
  if (text == "adapt") return Objective::kAdapt;
  throw Error("unknown objective '" + std::string(text) + "' (expected pretrain, finetune or adapt)");
}

std::string ObjectiveName(Objective objective) {
  switch (objective) {
    case Objective::kPretrain: return "pretrain";
    case Objective::kFinetune: return "finetune";
    case Objective::kAdapt: return "adapt";
  }
  return "?";
}

void ValidateStageSpec(const StageSpec& stage) {
  if (stage.name.empty()) throw ConfigError("name", "", "stage name must not be empty");
  if (stage.steps <= 0) throw ConfigError("steps", "", "must be positive");
  if (stage.batch_size <= 0) throw ConfigError("batch_size", "", "must be positive");
  if (stage.eval_every < 0) throw ConfigError("eval_every", "", "must be >= 0");
  if (stage.num_classes < 0) throw ConfigError("num_classes", "", "must be >= 0");
  if (stage.train.empty()) throw ConfigError("train", "", "needs at least one manifest");
  ValidateFreezePlan(stage.freeze);
  ValidateLrSchedule(stage.lr);
  losses::ValidatePretrainLossSpec(stage.loss);
  if (!(stage.mask.start_prob >= 0 && stage.mask.start_prob <= 1) || stage.mask.span < 1) {
    throw ConfigError("mask", "", "start_prob must lie in [0, 1] and span be >= 1");
  }
  if (stage.init.from.empty()) throw ConfigError("init", "", "must not be empty");
}

std::vector<losses::Example> LoadExamples(const std::vector<std::filesystem::path>& manifests,
                                          const encoder::ModelSpec& spec, bool labels) {
  const features::FrameGeometry geometry = features::Geometry(spec.stack);
  std::vector<losses::Example> out;
  for (const auto& manifest : manifests) {
    for (const audio::Utterance& utt : audio::LoadManifest(manifest)) {
      if (utt.sample_rate != spec.stack.sample_rate) {
        throw TrainingError("sample-rate mismatch: utterance '" + utt.id + "' of " +
                            manifest.string() + " is " + std::to_string(utt.sample_rate) +
                            " Hz but model '" + spec.name + "' expects " +
                            std::to_string(spec.stack.sample_rate) +
                            " Hz; resample the corpus or adapt the feature extractor");
      }
      losses::Example ex;
      ex.id = utt.id;
      ex.audio = audio::LoadUtteranceAudio(utt);
      if (geometry.OutputLength(ex.audio.samples.size()) == 0) {
        throw TrainingError("utterance '" + utt.id + "' is shorter than the receptive field");
      }
      if (labels) {
        for (int label : audio::FrameLabels(utt, geometry)) {
          ex.labels.push_back(static_cast<std::size_t>(label));
        }
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

BatchSampler::BatchSampler(std::size_t num_items, int batch_size, std::uint64_t seed)
    : num_items_(num_items),
      batch_(std::min(num_items, static_cast<std::size_t>(std::max(batch_size, 1)))),
      rng_(seed, "batches") {
  if (num_items == 0) throw TrainingError("empty training set");
}

std::vector<std::size_t> BatchSampler::Next() {
  if (order_.empty() || pos_ + batch_ > num_items_) {
    order_.resize(num_items_);
    for (std::size_t i = 0; i < num_items_; ++i) order_[i] = i;
    num::CounterRng rng = rng_.Split("epoch", epoch_++);
    for (std::size_t i = num_items_; i > 1; --i) std::swap(order_[i - 1], order_[rng.Below(i)]);
    pos_ = 0;
  }
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                               order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
  pos_ += batch_;
  return out;
}

nlohmann::json StepMetrics::ToJson() const {
  return {{"step", step},
          {"loss", loss},
          {"terms", terms},
          {"lr", lr},
          {"trainable_param_count", trainable_param_count},
          {"masked_fraction", masked_fraction}};
}

nlohmann::json EvalMetrics::ToJson() const {
  nlohmann::json j = {{"step", step}, {"loss", loss}, {"frames", frames}};
  if (accuracy) j["accuracy"] = *accuracy;
  return j;
}

StepMetrics TrainStep(encoder::Model& model, const std::vector<const losses::Example*>& batch,
                      const StepOptions& options, const FreezePlan& plan, Adam& adam,
                      std::int64_t step, double lr, num::CounterRng rng) {
  const std::set<std::string> trainable = ResolveFreeze(plan, model.spec, step);
  StepMetrics m;
  m.step = step;
  m.lr = lr;
  for (const auto& name : trainable) m.trainable_param_count += model.params.at(name).size();

  num::Graph<float> g;
  const auto params = num::Bind<float>(g, model.params, [&](const std::string& name) {
    return trainable.count(name) != 0;
  });
  num::Var<float> loss;
  try {
    if (options.objective == Objective::kPretrain) {
      losses::PretrainOptions po;
      po.mask = options.mask;
      const auto terms =
          losses::PretrainLossGraph<float>(model.spec, params, batch, options.loss, po, rng);
      loss = terms.total;
      m.terms["contrastive"] = terms.contrastive.value()[0];
      m.terms["diversity"] = terms.diversity.value()[0];
      m.terms["perplexity"] = terms.perplexity;
      m.masked_fraction =
          static_cast<double>(terms.masked_frames) / static_cast<double>(terms.frames);
    } else {
      const auto terms =
          losses::FinetuneLossGraph<float>(model.spec, params, batch, encoder::Mode::kTrain, rng);
      loss = terms.loss;
      m.terms["fce"] = terms.loss.value()[0];
      m.terms["accuracy"] = static_cast<double>(terms.correct) / static_cast<double>(terms.frames);
    }
  } catch (const NonFiniteError& e) {
    throw TrainingError("non-finite loss at step " + std::to_string(step) + ": " + e.what());
  }
  m.loss = loss.value()[0];
  if (!std::isfinite(m.loss)) {
    throw TrainingError("non-finite loss at step " + std::to_string(step));
  }

  g.Backward(loss);
  std::vector<std::pair<const std::string*, num::Tensor>> grads;
  for (const auto& name : trainable) {
    num::Tensor grad = g.Grad(params.at(name));
    if (!grad.AllFinite()) {
      throw TrainingError("non-finite gradient for '" + name + "' at step " +
                          std::to_string(step));
    }
    grads.emplace_back(&name, std::move(grad));
  }
  for (auto& [name, grad] : grads) adam.Update(*name, model.params.at(*name), grad, lr);
  return m;
}

EvalMetrics Evaluate(const encoder::Model& model, const std::vector<losses::Example>& examples,
                     const StepOptions& options, std::uint64_t seed, int batch_size) {
  EvalMetrics out;
  if (examples.empty()) return out;
  const num::CounterRng root(seed, "eval");
  double weighted = 0, weight = 0;
  std::size_t correct = 0;
  const auto chunk = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < examples.size(); start += chunk) {
    std::vector<const losses::Example*> batch;
    for (std::size_t i = start; i < std::min(examples.size(), start + chunk); ++i) {
      batch.push_back(&examples[i]);
    }
    num::Graph<float> g;
    const auto params = num::Bind<float>(g, model.params, [](const std::string&) { return false; });
    num::CounterRng rng = root.Split("batch", start);
    if (options.objective == Objective::kPretrain) {
      losses::PretrainOptions po;
      po.mask = options.mask;
      po.mode = encoder::Mode::kEval;
      po.quantizer = encoder::QuantizerMode::kArgmax;
      const auto terms = losses::PretrainLossGraph<float>(model.spec, params, batch, options.loss,
                                                          po, rng);
      weighted += terms.total.value()[0] * static_cast<double>(terms.masked_frames);
      weight += static_cast<double>(terms.masked_frames);
      out.frames += terms.frames;
    } else {
      const auto terms =
          losses::FinetuneLossGraph<float>(model.spec, params, batch, encoder::Mode::kEval, rng);
      weighted += terms.loss.value()[0] * static_cast<double>(terms.frames);
      weight += static_cast<double>(terms.frames);
      out.frames += terms.frames;
      correct += terms.correct;
    }
  }
  out.loss = weighted / weight;
  if (IsSupervised(options.objective)) {
    out.accuracy = static_cast<double>(correct) / static_cast<double>(out.frames);
  }
  return out;
}

checkpoint::Checkpoint PrepareInit(const StageSpec& stage) {
  checkpoint::Checkpoint ckpt =
      stage.init.from == "random"
          ? checkpoint::InitCheckpoint(stage.model, num::CounterRng(stage.seed, "init").NextU64())
          : checkpoint::Load(stage.init.from);
  ckpt = checkpoint::ApplySurgery(ckpt, stage.init.surgery);
  const encoder::ModelSpec& spec = ckpt.model.spec;
  if (!IsSupervised(stage.objective)) {
    if (spec.has_head()) {
      throw TrainingError("pretrain needs a model without output head; add the detach_head surgery");
    }
    return ckpt;
  }
  if (!spec.has_head()) {
    if (stage.num_classes < 2) {
      throw TrainingError(ObjectiveName(stage.objective) +
                          " needs an output head: set num_classes (>= 2) to attach one");
    }
    checkpoint::SurgeryOp attach;
    attach.kind = checkpoint::SurgeryOp::Kind::kAttachHead;
    attach.value = stage.num_classes;
    return checkpoint::ApplySurgery(ckpt, {attach});
  }
  if (stage.num_classes != 0 && stage.num_classes != spec.num_classes) {
    throw TrainingError("num_classes " + std::to_string(stage.num_classes) +
                        " conflicts with the initial model's head of " +
                        std::to_string(spec.num_classes) + " classes");
  }
  return ckpt;
}

namespace {

void CheckLabels(const std::vector<losses::Example>& examples, int num_classes,
                 const std::string& what) {
  for (const auto& ex : examples) {
    for (std::size_t label : ex.labels) {
      if (label >= static_cast<std::size_t>(num_classes)) {
        throw TrainingError(what + " utterance '" + ex.id + "' has label " +
                            std::to_string(label) + " but the head has " +
                            std::to_string(num_classes) + " classes");
      }
    }
  }
}

StageResult RunStageImpl(const StageSpec& stage, const std::filesystem::path& out_dir,
                         std::ostream* log) {
  ValidateStageSpec(stage);
  StageResult result;
  result.checkpoint = PrepareInit(stage);
  encoder::Model& model = result.checkpoint.model;
  const std::string source = stage.init.from == "random"
                                 ? "random"
                                 : checkpoint::PayloadHash(checkpoint::Load(stage.init.from));

  const bool supervised = IsSupervised(stage.objective);
  const auto train = LoadExamples(stage.train, model.spec, supervised);
  const auto dev = LoadExamples(stage.dev, model.spec, supervised);
  if (supervised) {
    CheckLabels(train, model.spec.num_classes, "training");
    CheckLabels(dev, model.spec.num_classes, "dev");
  }
  // Fails early for last-M-blocks with M > N.
  for (const FreezePhase& phase : stage.freeze.phases) {
    IsTrainable(phase.trainable, model.spec, "");
  }

  std::ofstream metrics_out, eval_out;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    metrics_out.open(out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    eval_out.open(out_dir / "eval.jsonl", std::ios::binary | std::ios::trunc);
    if (!metrics_out || !eval_out) throw IoError("cannot write metrics under " + out_dir.string());
  }

  StepOptions options;
  options.objective = stage.objective;
  options.loss = stage.loss;
  options.mask = stage.mask;
  Adam adam(stage.adam);
  BatchSampler sampler(train.size(), stage.batch_size, stage.seed);
  const num::CounterRng step_root(stage.seed, "train");

  auto evaluate = [&](std::int64_t step) {
    if (dev.empty()) return;
    EvalMetrics e = Evaluate(model, dev, options, stage.seed, stage.batch_size);
    e.step = step;
    if (eval_out.is_open()) eval_out << e.ToJson().dump() << '\n' << std::flush;
    if (log) {
      *log << "[" << stage.name << "] step " << step << " dev loss " << e.loss;
      if (e.accuracy) *log << " accuracy " << *e.accuracy;
      *log << '\n';
    }
    result.evals.push_back(e);
  };

  for (std::int64_t step = 0; step < stage.steps; ++step) {
    std::vector<const losses::Example*> batch;
    for (std::size_t i : sampler.Next()) batch.push_back(&train[i]);
    const double lr = TriStageLr(stage.lr, step, stage.steps);
    StepMetrics m = TrainStep(model, batch, options, stage.freeze, adam, step, lr,
                              step_root.Split("step", static_cast<std::uint64_t>(step)));
    if (metrics_out.is_open()) metrics_out << m.ToJson().dump() << '\n';
    result.steps.push_back(std::move(m));
    const std::int64_t done = step + 1;
    if (stage.eval_every > 0 && done % stage.eval_every == 0 && done != stage.steps) {
      evaluate(done);
    }
  }
  evaluate(stage.steps);

  checkpoint::ProvenanceEntry entry;
  entry.kind = "stage";
  entry.name = stage.name;
  entry.objective = ObjectiveName(stage.objective);
  entry.seed = stage.seed;
  entry.steps = stage.steps;
  entry.source = source;
  result.checkpoint.provenance.push_back(entry);
  if (!out_dir.empty()) {
    metrics_out.close();
    eval_out.close();
    checkpoint::Save(result.checkpoint, out_dir / "model.w2vs");
  }
  return result;
}

}  // namespace

StageResult RunStage(const StageSpec& stage, const std::filesystem::path& out_dir,
                     std::ostream* log) {
  try {
    return RunStageImpl(stage, out_dir, log);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw TrainingError("stage '" + stage.name + "': " + e.what());
  }
}

}  // namespace w2vs::training
