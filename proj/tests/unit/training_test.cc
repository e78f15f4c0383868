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


#include <cmath>
#include <cstring>
#include <fstream>

#include <gmock/gmock.h>
#include <gtest/gtest.h>
#include <json.hpp>

#include "test_util.h"
#include "w2vs/audio/corpus.h"
#include "w2vs/checkpoint/checkpoint.h"
#include "w2vs/common/error.h"
#include "w2vs/encoder/spec_json.h"
#include "w2vs/training/freeze.h"
#include "w2vs/training/optimizer.h"
#include "w2vs/training/pipeline.h"
#include "w2vs/training/stage.h"

namespace w2vs::training {
namespace {

using ::testing::HasSubstr;
using nlohmann::json;

// 8 kHz extractor with the last stride halved, two narrow blocks.
encoder::ModelSpec SmallModel(int blocks = 2) {
  encoder::ModelSpec s = encoder::ModelSpecFromJson(JsonReader(
      json{{"stack", {{"base_channels", 8}, {"bandwidth_plan", "last"}}},
           {"encoder",
            {{"num_blocks", blocks}, {"dim", 16}, {"heads", 2}, {"ffn_dim", 32},
             {"pos_conv_kernel", 5}, {"pos_conv_groups", 2}}},
           {"quantizer", {{"groups", 2}, {"entries", 8}, {"code_dim", 16}}}},
      "model"));
  return s;
}

std::filesystem::path SmallCorpus(const std::string& name, int utterances, int rate = 8000,
                                  std::uint64_t seed = 5, double seconds = 0.6) {
  static std::map<std::string, std::filesystem::path> made;
  const std::string key = name + "/" + std::to_string(utterances) + "/" + std::to_string(rate);
  if (made.count(key)) return made[key];
  audio::CorpusSpec c;
  c.name = name;
  c.num_utterances = utterances;
  c.min_duration_s = c.max_duration_s = seconds;
  c.sample_rate = rate;
  c.seed = seed;
  c.profile.num_classes = 4;
  c.profile.min_segment_s = 0.15;
  c.profile.max_segment_s = 0.3;
  return made[key] = audio::SynthCorpus(c, testing::TempDir("corpus_" + name + "_" + std::to_string(rate)));
}

bool SameBits(const num::Tensor& a, const num::Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

std::vector<const losses::Example*> Pointers(const std::vector<losses::Example>& v) {
  std::vector<const losses::Example*> out;
  for (const auto& e : v) out.push_back(&e);
  return out;
}

FreezePlan Plan(const std::string& trainable) {
  FreezePlan p;
  p.phases = {{std::nullopt, ParseTrainableSet(trainable)}};
  return p;
}

// --- freezing -----------------------------------------------------------------

TEST(FreezeTest, DescriptorTextRoundTrips) {
  for (const char* text : {"none", "output-head-only", "all-except-feature-extractor",
                           "last-3-blocks", "last-0-blocks", "all"}) {
    EXPECT_EQ(ParseTrainableSet(text).ToString(), text);
  }
  for (const char* bad : {"", "last--blocks", "last-x-blocks", "last-2", "everything", "last--1-blocks"}) {
    EXPECT_THROW(ParseTrainableSet(bad), Error) << bad;
  }
}

TEST(FreezeTest, PlanValidation) {
  FreezePlan ok;
  ok.phases = {{100, ParseTrainableSet("output-head-only")},
               {std::nullopt, ParseTrainableSet("all-except-feature-extractor")}};
  EXPECT_NO_THROW(ValidateFreezePlan(ok));
  FreezePlan empty;
  empty.phases.clear();
  EXPECT_THROW(ValidateFreezePlan(empty), ConfigError);
  FreezePlan closed = ok;
  closed.phases.back().until_step = 200;
  EXPECT_THAT([&] { ValidateFreezePlan(closed); },
              ::testing::ThrowsMessage<ConfigError>(HasSubstr("open-ended")));
  FreezePlan open_middle = ok;
  open_middle.phases.front().until_step.reset();
  EXPECT_THROW(ValidateFreezePlan(open_middle), ConfigError);
  FreezePlan decreasing;
  decreasing.phases = {{100, {}}, {100, {}}, {std::nullopt, {}}};
  EXPECT_THAT([&] { ValidateFreezePlan(decreasing); },
              ::testing::ThrowsMessage<ConfigError>(HasSubstr("strictly increasing")));
}

TEST(FreezeTest, InitiallyOnlyTheOutputLayerIsUpdated) {
  encoder::ModelSpec spec = SmallModel(3);
  spec.num_classes = 4;
  FreezePlan plan;
  plan.phases = {{100, ParseTrainableSet("output-head-only")},
                 {std::nullopt, ParseTrainableSet("all-except-feature-extractor")}};
  const auto early = ResolveFreeze(plan, spec, 50);
  EXPECT_EQ(early, (std::set<std::string>{"head.bias", "head.weight"}));
  for (std::int64_t step = 0; step < 100; ++step) EXPECT_EQ(ResolveFreeze(plan, spec, step), early);
  const auto late = ResolveFreeze(plan, spec, 100);
  for (const auto& [name, shape] : encoder::ParamShapes(spec)) {
    EXPECT_EQ(late.count(name) == 1, !encoder::IsFeatureExtractor(name)) << name;
  }
}

TEST(FreezeTest, LastBlocks) {
  encoder::ModelSpec spec = SmallModel(3);
  spec.num_classes = 4;
  const auto all_blocks = ResolveFreeze(Plan("last-3-blocks"), spec, 0);
  const auto last_one = ResolveFreeze(Plan("last-1-blocks"), spec, 0);
  for (const auto& [name, shape] : encoder::ParamShapes(spec)) {
    const int block = encoder::BlockIndexOf(name);
    EXPECT_EQ(all_blocks.count(name) == 1, block > 0 || encoder::IsHead(name)) << name;
    EXPECT_EQ(last_one.count(name) == 1, block == 3 || encoder::IsHead(name)) << name;
  }
  EXPECT_THAT([&] { ResolveFreeze(Plan("last-4-blocks"), spec, 0); },
              ::testing::ThrowsMessage<TrainingError>(HasSubstr("only 3 blocks")));
  EXPECT_EQ(ResolveFreeze(Plan("all"), spec, 7).size(), encoder::ParamShapes(spec).size());
  EXPECT_TRUE(ResolveFreeze(Plan("none"), spec, 7).empty());
}

// --- optimizer ----------------------------------------------------------------

TEST(AdamTest, MatchesTextbookRecurrence) {
  const double lr = 0.01, b1 = 0.9, b2 = 0.98, eps = 1e-8;
  const double grads[] = {0.5, -1.25, 3.0, 0.0, -0.01, 2.5, -4.0, 0.75, 1e-4, -0.3};
  Adam adam;
  num::Tensor w(num::Shape{1}, 0.25f);
  long double x = 0.25L, m = 0, v = 0;
  for (int t = 1; t <= 10; ++t) {
    const double g = grads[t - 1];
    adam.Update("w", w, num::Tensor(num::Shape{1}, static_cast<float>(g)), lr);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const long double mhat = m / (1 - std::pow(static_cast<long double>(b1), t));
    const long double vhat = v / (1 - std::pow(static_cast<long double>(b2), t));
    x = static_cast<float>(x - lr * mhat / (std::sqrt(vhat) + eps));
    EXPECT_NEAR(w[0], static_cast<double>(x), 1e-7) << "step " << t;
  }
  EXPECT_EQ(adam.slots().at("w").t, 10);
}

TEST(AdamTest, SquareDescendsMonotonically) {
  Adam adam;
  num::Tensor w(num::Shape{1}, 1.0f);
  double previous = 1.0;
  for (int step = 0; step < 20; ++step) {
    adam.Update("w", w, num::Tensor(num::Shape{1}, 2.0f * w[0]), 0.01);
    EXPECT_LT(std::abs(w[0]), previous) << "step " << step;
    previous = std::abs(w[0]);
  }
}

// At lr 0.1 momentum carries w across the minimum on step 11 and |w| grows again.
TEST(AdamTest, SquareAtLargeStepOvershootsOnce) {
  Adam adam;
  num::Tensor w(num::Shape{1}, 1.0f);
  std::vector<double> path;
  for (int step = 0; step < 20; ++step) {
    adam.Update("w", w, num::Tensor(num::Shape{1}, 2.0f * w[0]), 0.1);
    path.push_back(w[0]);
  }
  for (int i = 1; i <= 10; ++i) EXPECT_LT(std::abs(path[i]), std::abs(path[i - 1])) << i;
  EXPECT_GT(path[9], 0);
  EXPECT_NEAR(path[10], -0.0029, 1e-4);
  EXPECT_GT(std::abs(path[11]), std::abs(path[10]));
  EXPECT_NEAR(path[19], -0.2787, 1e-4);
}

TEST(AdamTest, SlotsAreCreatedPerTensor) {
  Adam adam;
  num::Tensor a(num::Shape{2}), b(num::Shape{2});
  adam.Update("a", a, num::Tensor(num::Shape{2}, 1.0f), 0.1);
  adam.Update("a", a, num::Tensor(num::Shape{2}, 1.0f), 0.1);
  adam.Update("b", b, num::Tensor(num::Shape{2}, 1.0f), 0.1);
  EXPECT_EQ(adam.slots().at("a").t, 2);
  EXPECT_EQ(adam.slots().at("b").t, 1);
  // Full bias correction on the first update: the step is lr * sign(g).
  EXPECT_NEAR(b[0], -0.1f, 1e-6);
  EXPECT_THROW(adam.Update("a", a, num::Tensor(num::Shape{3}), 0.1), ShapeError);
}

TEST(LrScheduleTest, TriStageShape) {
  LrSchedule s;
  s.peak_lr = 1.0;
  EXPECT_DOUBLE_EQ(TriStageLr(s, 0, 100), 0.1);
  EXPECT_DOUBLE_EQ(TriStageLr(s, 4, 100), 0.5);
  EXPECT_DOUBLE_EQ(TriStageLr(s, 9, 100), 1.0);
  for (int step = 10; step <= 50; ++step) EXPECT_DOUBLE_EQ(TriStageLr(s, step, 100), 1.0);
  EXPECT_DOUBLE_EQ(TriStageLr(s, 75, 100), 0.5);
  EXPECT_DOUBLE_EQ(TriStageLr(s, 99, 100), 0.02);
  for (int step = 51; step < 100; ++step) {
    EXPECT_LT(TriStageLr(s, step, 100), TriStageLr(s, step - 1, 100));
  }
  EXPECT_DOUBLE_EQ(TriStageLr(s, 0, 1), 1.0);
  EXPECT_THROW(TriStageLr(s, 100, 100), Error);
  LrSchedule bad = s;
  bad.warmup_fraction = 0.7;
  EXPECT_THROW(ValidateLrSchedule(bad), ConfigError);
}

TEST(BatchSamplerTest, EpochsArePermutations) {
  BatchSampler a(16, 8, 3), b(16, 8, 3);
  std::vector<std::size_t> first_epoch;
  for (int i = 0; i < 6; ++i) {
    const auto batch = a.Next();
    EXPECT_EQ(batch, b.Next());
    ASSERT_EQ(batch.size(), 8u);
    if (i < 2) first_epoch.insert(first_epoch.end(), batch.begin(), batch.end());
  }
  std::sort(first_epoch.begin(), first_epoch.end());
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(first_epoch[i], i);
  EXPECT_NE(BatchSampler(16, 8, 3).Next(), BatchSampler(16, 8, 4).Next());
  EXPECT_EQ(BatchSampler(3, 8, 1).Next().size(), 3u);
  EXPECT_THROW(BatchSampler(0, 8, 1), TrainingError);
}

// --- train_step ---------------------------------------------------------------

class TrainStepTest : public ::testing::Test {
 protected:
  void SetUp() override {
    spec_ = SmallModel();
    spec_.num_classes = 4;
    data_ = LoadExamples({SmallCorpus("steps", 4)}, spec_, true);
  }

  encoder::Model Fresh() const { return encoder::InitModel(spec_, 11); }

  encoder::ModelSpec spec_;
  std::vector<losses::Example> data_;
};

TEST_F(TrainStepTest, FrozenTensorsAndSlotsUntouchedUnderEveryDescriptor) {
  for (const char* text : {"none", "output-head-only", "all-except-feature-extractor",
                           "last-1-blocks", "last-2-blocks", "all"}) {
    SCOPED_TRACE(text);
    encoder::Model model = Fresh();
    model.params.at("head.weight")[0] = 0.1f;  // a zero head would block all other gradients
    const encoder::Model before = model;
    const FreezePlan plan = Plan(text);
    const auto trainable = ResolveFreeze(plan, spec_, 0);
    Adam adam;
    StepOptions options;
    options.objective = Objective::kFinetune;
    for (int step = 0; step < 3; ++step) {
      const auto m = TrainStep(model, Pointers(data_), options, plan, adam, step, 1e-3,
                               num::CounterRng(1, "t").Split("step", step));
      std::size_t count = 0;
      for (const auto& name : trainable) count += model.params.at(name).size();
      EXPECT_EQ(m.trainable_param_count, count);
    }
    for (const auto& [name, t] : model.params) {
      // Fine-tuning neither masks nor quantizes.
      const std::string component = encoder::ComponentOf(name);
      const bool in_graph = component != "quantizer" && component != "final_proj" &&
                            name != "frontend.mask_embedding";
      if (trainable.count(name)) {
        if (in_graph) EXPECT_FALSE(SameBits(t, before.params.at(name))) << name;
        EXPECT_EQ(adam.slots().at(name).t, 3) << name;
      } else {
        EXPECT_TRUE(SameBits(t, before.params.at(name))) << name;
        EXPECT_EQ(adam.slots().count(name), 0u) << name;
      }
    }
  }
}

TEST_F(TrainStepTest, NonFiniteLossAbortsBeforeAnyUpdate) {
  encoder::Model model = Fresh();
  model.params.at("head.bias")[1] = std::nanf("");
  const encoder::Model before = model;
  Adam adam;
  StepOptions options;
  options.objective = Objective::kFinetune;
  EXPECT_THAT([&] { TrainStep(model, Pointers(data_), options, Plan("all"), adam, 7, 1e-3,
                              num::CounterRng(1, "t")); },
              ::testing::ThrowsMessage<TrainingError>(HasSubstr("non-finite loss at step 7")));
  for (const auto& [name, t] : model.params) EXPECT_TRUE(SameBits(t, before.params.at(name))) << name;
  EXPECT_TRUE(adam.slots().empty());
}

TEST_F(TrainStepTest, PretrainMetricsCarryTerms) {
  encoder::ModelSpec spec = spec_;
  spec.num_classes = 0;
  encoder::Model model = encoder::InitModel(spec, 2);
  Adam adam;
  StepOptions options;
  options.loss.num_distractors = 3;
  options.mask = {0.2, 3};
  const auto m = TrainStep(model, Pointers(data_), options, Plan("all"), adam, 0, 1e-3,
                           num::CounterRng(4, "t"));
  EXPECT_EQ(m.terms.count("contrastive"), 1u);
  EXPECT_EQ(m.terms.count("diversity"), 1u);
  EXPECT_NEAR(m.loss, m.terms.at("contrastive") + 0.1 * m.terms.at("diversity"), 1e-5);
  EXPECT_GT(m.masked_fraction, 0.0);
  EXPECT_LT(m.masked_fraction, 1.0);
  EXPECT_EQ(m.trainable_param_count, num::CountParameters(model.params));
  const json j = m.ToJson();
  for (const char* key : {"step", "loss", "terms", "lr", "trainable_param_count", "masked_fraction"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

// --- stages -------------------------------------------------------------------

StageSpec FinetuneStage(const std::string& name = "ft") {
  StageSpec s;
  s.name = name;
  s.objective = Objective::kFinetune;
  s.model = SmallModel();
  s.num_classes = 4;
  s.train = {SmallCorpus("stage_train", 8)};
  s.dev = {SmallCorpus("stage_dev", 4)};
  s.steps = 6;
  s.batch_size = 4;
  s.eval_every = 3;
  s.lr.peak_lr = 3e-3;
  s.seed = 9;
  return s;
}

TEST(StageTest, WritesArtifactsWithProvenance) {
  const auto dir = testing::TempDir("stage_artifacts");
  const StageResult r = RunStage(FinetuneStage(), dir / "ft");
  ASSERT_EQ(r.steps.size(), 6u);
  ASSERT_EQ(r.evals.size(), 2u);
  EXPECT_EQ(r.evals[0].step, 3);
  EXPECT_EQ(r.evals[1].step, 6);
  ASSERT_TRUE(r.evals[1].accuracy.has_value());
  const checkpoint::Checkpoint saved = checkpoint::Load(dir / "ft" / "model.w2vs");
  EXPECT_EQ(checkpoint::Serialize(saved), checkpoint::Serialize(r.checkpoint));
  const auto& prov = saved.provenance;
  ASSERT_EQ(prov.size(), 3u);
  EXPECT_EQ(prov[0].kind, "init");
  EXPECT_EQ(prov[1].name, "attach_head 4");
  EXPECT_EQ(prov[2].kind, "stage");
  EXPECT_EQ(prov[2].name, "ft");
  EXPECT_EQ(prov[2].objective, "finetune");
  EXPECT_EQ(prov[2].source, "random");
  EXPECT_EQ(prov[2].seed, 9u);
  EXPECT_EQ(prov[2].steps, 6);

  std::ifstream metrics(dir / "ft" / "metrics.jsonl");
  int lines = 0;
  for (std::string line; std::getline(metrics, line); ++lines) {
    const json j = json::parse(line);
    EXPECT_EQ(j["step"], lines);
    EXPECT_EQ(j["trainable_param_count"].get<std::size_t>(), num::CountParameters(saved.model.params));
  }
  EXPECT_EQ(lines, 6);
}

TEST(StageTest, FinetuneFromTruncatedCheckpointRecordsSurgery) {
  const auto dir = testing::TempDir("stage_truncate");
  encoder::ModelSpec donor_spec = SmallModel(4);
  checkpoint::Save(checkpoint::InitCheckpoint(donor_spec, 3), dir / "donor.w2vs");
  StageSpec s = FinetuneStage();
  s.init.from = (dir / "donor.w2vs").string();
  s.init.surgery = {checkpoint::ParseSurgeryOp("truncate:2")};
  s.freeze.phases = {{2, ParseTrainableSet("output-head-only")},
                     {std::nullopt, ParseTrainableSet("last-2-blocks")}};
  const StageResult r = RunStage(s, dir / "ft");
  EXPECT_EQ(checkpoint::Surgeries(r.checkpoint),
            (std::vector<std::string>{"truncate 2", "attach_head 4"}));
  EXPECT_EQ(r.checkpoint.model.spec.encoder.num_blocks, 2);
  EXPECT_EQ(r.checkpoint.provenance.back().source,
            checkpoint::PayloadHash(checkpoint::Load(dir / "donor.w2vs")));
  EXPECT_LT(r.steps[0].trainable_param_count, r.steps[2].trainable_param_count);
  // Everything outside the last two blocks and the head is bit-identical to the donor.
  const checkpoint::Checkpoint donor = checkpoint::Load(dir / "donor.w2vs");
  for (const auto& d : checkpoint::Diff(donor.model, r.checkpoint.model)) {
    if (d.status == "removed") {
      EXPECT_GT(encoder::BlockIndexOf(d.name), 2) << d.name;
    } else if (d.status == "added") {
      EXPECT_TRUE(encoder::IsHead(d.name)) << d.name;
    } else {
      EXPECT_EQ(d.status == "changed", encoder::BlockIndexOf(d.name) > 0) << d.name;
    }
  }
}

TEST(StageTest, RepeatedRunIsBitIdentical) {
  const auto dir = testing::TempDir("stage_repeat");
  StageSpec s = FinetuneStage();
  RunStage(s, dir / "a");
  RunStage(s, dir / "b");
  for (const char* file : {"model.w2vs", "metrics.jsonl", "eval.jsonl"}) {
    EXPECT_EQ(testing::ReadFileBytes(dir / "a" / file), testing::ReadFileBytes(dir / "b" / file))
        << file;
  }
  s.seed = 10;
  RunStage(s, dir / "c");
  EXPECT_NE(testing::ReadFileBytes(dir / "a" / "model.w2vs"),
            testing::ReadFileBytes(dir / "c" / "model.w2vs"));
}

TEST(StageTest, SampleRateMismatchIsAHardError) {
  StageSpec s = FinetuneStage();
  s.model = encoder::ToyModelSpec(8);  // 16 kHz extractor
  s.dev.clear();
  EXPECT_THAT([&] { RunStage(s, ""); },
              ::testing::ThrowsMessage<TrainingError>(
                  ::testing::AllOf(HasSubstr("stage 'ft'"), HasSubstr("8000 Hz"),
                                   HasSubstr("expects 16000 Hz"))));
}

TEST(StageTest, ObjectiveAndHeadMustAgree) {
  StageSpec pre = FinetuneStage();
  pre.objective = Objective::kPretrain;
  pre.model.num_classes = 4;
  EXPECT_THAT([&] { RunStage(pre, ""); },
              ::testing::ThrowsMessage<TrainingError>(HasSubstr("without output head")));
  StageSpec ft = FinetuneStage();
  ft.num_classes = 0;
  EXPECT_THAT([&] { RunStage(ft, ""); },
              ::testing::ThrowsMessage<TrainingError>(HasSubstr("needs an output head")));
  StageSpec few = FinetuneStage();
  few.num_classes = 3;  // corpus labels go up to 3
  EXPECT_THAT([&] { RunStage(few, ""); },
              ::testing::ThrowsMessage<TrainingError>(HasSubstr("head has 3 classes")));
  StageSpec deep = FinetuneStage();
  deep.freeze = Plan("last-3-blocks");
  EXPECT_THAT([&] { RunStage(deep, ""); },
              ::testing::ThrowsMessage<TrainingError>(HasSubstr("only 2 blocks")));
}

TEST(StageTest, OverfitsOneUtterance) {
  StageSpec s = FinetuneStage();
  s.model.encoder.dropout = 0;
  s.train = {SmallCorpus("overfit", 1)};
  s.dev = s.train;
  s.steps = 150;
  s.eval_every = 0;
  s.lr.peak_lr = 1e-2;
  const StageResult r = RunStage(s, "");
  const auto examples = LoadExamples(s.train, r.checkpoint.model.spec, true);
  const num::Tensor features = features::Extract(r.checkpoint.model.spec.stack,
                                                 r.checkpoint.model.params, examples[0].audio);
  const num::Tensor logits = encoder::OutputHead(
      r.checkpoint.model, encoder::Encode(r.checkpoint.model, features, {}, encoder::Mode::kEval));
  ASSERT_EQ(logits.dim(0), examples[0].labels.size());
  for (std::size_t t = 0; t < logits.dim(0); ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.dim(1); ++c) {
      if (logits(t, c) > logits(t, best)) best = c;
    }
    EXPECT_EQ(best, examples[0].labels[t]) << "frame " << t;
  }
  EXPECT_DOUBLE_EQ(*r.evals.back().accuracy, 1.0);
}

TEST(StageTest, PretrainContrastiveTermDrops) {
  StageSpec s;
  s.name = "smoke";
  s.objective = Objective::kPretrain;
  s.model = encoder::ModelSpecFromJson(JsonReader(
      json{{"stack", {{"base_channels", 16}, {"bandwidth_plan", "last"}}},
           {"encoder",
            {{"num_blocks", 2}, {"dim", 32}, {"heads", 2}, {"ffn_dim", 64},
             {"pos_conv_kernel", 9}, {"pos_conv_groups", 2}}},
           {"quantizer", {{"groups", 2}, {"entries", 16}, {"code_dim", 32}}}},
      "model"));
  audio::CorpusSpec c;
  c.name = "smoke";
  c.sample_rate = 8000;
  c.seed = CorpusSeed(1, "c");
  c.profile.band_limit = true;
  s.train = {audio::SynthCorpus(c, testing::TempDir("corpus_smoke"))};
  s.steps = 200;
  s.lr.peak_lr = 5e-3;
  s.mask = {0.1, 5};
  s.seed = 1;
  const StageResult r = RunStage(s, "");
  double first = 0, last = 0;
  for (int i = 0; i < 5; ++i) first += r.steps[i].terms.at("contrastive") / 5;
  for (int i = 190; i < 200; ++i) last += r.steps[i].terms.at("contrastive") / 10;
  EXPECT_LE(last, 0.7 * first) << "first " << first << " last " << last;
}

// --- configuration ----------------------------------------------------------

json PipelineDoc() {
  return json::parse(R"({
    "name": "p",
    "seed": 3,
    "model": {"stack": {"base_channels": 8, "bandwidth_plan": "last"},
              "encoder": {"num_blocks": 2, "dim": 16, "heads": 2, "ffn_dim": 32,
                          "pos_conv_kernel": 5, "pos_conv_groups": 2},
              "quantizer": {"groups": 2, "entries": 8, "code_dim": 16}},
    "corpora": {
      "inhouse": {"num_utterances": 4, "min_duration_s": 0.6, "max_duration_s": 0.6,
                  "sample_rate": 8000, "profile": {"num_classes": 4}},
      "indomain": {"num_utterances": 4, "min_duration_s": 0.6, "max_duration_s": 0.6,
                   "sample_rate": 8000, "profile": {"num_classes": 4, "noise_level": 0.2}}
    },
    "stage_defaults": {"steps": 2, "batch_size": 4, "num_classes": 4, "optimizer": {"lr": 0.001}},
    "stages": [
      {"name": "pre", "objective": "pretrain", "train": "corpus:inhouse+corpus:indomain",
       "num_classes": 0, "loss": {"num_distractors": 3}, "mask": {"start_prob": 0.3, "span": 3}},
      {"name": "ft", "objective": "finetune", "init": "stage:pre", "train": ["corpus:inhouse"],
       "dev": "corpus:indomain"},
      {"name": "adapt", "objective": "adapt", "init": {"from": "stage:ft"},
       "train": "corpus:indomain", "dev": "corpus:indomain",
       "freeze": [{"until": 1, "trainable": "output-head-only"}, {"trainable": "last-1-blocks"}]}
    ]
  })");
}

TEST(ConfigTest, PipelineParses) {
  const PipelineSpec p = PipelineSpecFromJson(PipelineDoc(), "/base");
  EXPECT_EQ(p.seed, 3u);
  ASSERT_EQ(p.corpora.size(), 2u);
  EXPECT_EQ(p.corpora[0].name, "indomain");
  EXPECT_EQ(p.corpora[0].seed, CorpusSeed(3, "indomain"));
  EXPECT_NE(CorpusSeed(3, "indomain"), CorpusSeed(3, "inhouse"));
  ASSERT_EQ(p.stages.size(), 3u);
  EXPECT_EQ(p.stages[0].train,
            (std::vector<std::filesystem::path>{"corpus:inhouse", "corpus:indomain"}));
  EXPECT_EQ(p.stages[0].num_classes, 0);
  EXPECT_EQ(p.stages[1].num_classes, 4);
  EXPECT_EQ(p.stages[1].steps, 2);
  EXPECT_DOUBLE_EQ(p.stages[1].lr.peak_lr, 0.001);
  EXPECT_EQ(p.stages[2].init.from, "stage:ft");
  EXPECT_EQ(p.stages[2].freeze.phases.size(), 2u);
  EXPECT_EQ(p.stages[2].seed, StageSeed(3, "adapt"));
  EXPECT_EQ(PipelineSpecFromJson(PipelineDoc(), "/base", 8).stages[2].seed, StageSeed(8, "adapt"));
}

TEST(ConfigTest, ErrorsNameThePath) {
  auto expect_error = [](const std::string& override_text, const std::string& needle) {
    json doc = PipelineDoc();
    ApplyOverride(doc, override_text);
    EXPECT_THAT([&] { PipelineSpecFromJson(doc, "/base"); },
                ::testing::ThrowsMessage<ConfigError>(HasSubstr(needle)))
        << override_text;
  };
  expect_error("stage_defaults.stepz=3", "stages[0].stepz: unknown key");
  expect_error("stage_defaults.steps=\"many\"", "stages[0].steps: expected integer, got string");
  expect_error("corpora.inhouse.profile.noise=0.1", "corpora.inhouse.profile.noise: unknown key");
  expect_error("stage_defaults.optimizer.lr=-1", "stages[0].optimizer.lr: must be positive");
  expect_error("stage_defaults.init=stage:adapt", "stages[0].init: 'stage:adapt' does not name an earlier stage");
  expect_error("stage_defaults.dev=corpus:hykist", "unknown corpus 'corpus:hykist'");
  expect_error("seed=\"seven\"", "seed: expected non-negative integer, got string");
}

TEST(ConfigTest, OverridesReachIntoArrays) {
  json doc = PipelineDoc();
  ApplyOverride(doc, "stages.1.steps=7");
  ApplyOverride(doc, "stages.2.freeze.0.until=2");
  ApplyOverride(doc, "stages.0.train=corpus:inhouse");
  ApplyOverride(doc, "corpora.inhouse.profile.band_limit=true");
  EXPECT_EQ(doc["stages"][1]["steps"], 7);
  EXPECT_EQ(doc["stages"][2]["freeze"][0]["until"], 2);
  EXPECT_EQ(doc["stages"][0]["train"], "corpus:inhouse");
  EXPECT_EQ(doc["corpora"]["inhouse"]["profile"]["band_limit"], true);
  EXPECT_THAT([&] { ApplyOverride(doc, "stages.9.steps=1"); },
              ::testing::ThrowsMessage<ConfigError>(HasSubstr("stages: index 9 is out of range (size 3)")));
  EXPECT_THAT([&] { ApplyOverride(doc, "stages.first.steps=1"); },
              ::testing::ThrowsMessage<ConfigError>(HasSubstr("not an index")));
  EXPECT_THAT([&] { ApplyOverride(doc, "seed.x=1"); },
              ::testing::ThrowsMessage<ConfigError>(HasSubstr("seed: cannot override inside")));
  EXPECT_THROW(ApplyOverride(doc, "novalue"), ConfigError);
  EXPECT_THROW(ApplyOverride(doc, "a..b=1"), ConfigError);
}

TEST(ConfigTest, SingleStageDocument) {
  const json doc = json::parse(R"({"name": "s", "objective": "pretrain", "train": ["data/manifest.jsonl"], "seed": 4,
                                   "model": {"encoder": {"num_blocks": 1}}})");
  const StageSpec s = LoadStageConfig(doc, "/cfg", Objective::kPretrain, std::nullopt);
  EXPECT_EQ(s.objective, Objective::kPretrain);
  EXPECT_EQ(s.seed, 4u);
  EXPECT_EQ(s.model.encoder.num_blocks, 1);
  EXPECT_EQ(s.train[0], std::filesystem::path("/cfg/data/manifest.jsonl"));
  EXPECT_EQ(LoadStageConfig(doc, "/cfg", Objective::kPretrain, 99).seed, 99u);
  EXPECT_THAT([&] { LoadStageConfig(doc, "/cfg", Objective::kFinetune, std::nullopt); },
              ::testing::ThrowsMessage<ConfigError>(HasSubstr("command runs 'finetune'")));
  json ref = doc;
  ref["train"] = "corpus:x";
  EXPECT_THROW(LoadStageConfig(ref, "/cfg", Objective::kPretrain, std::nullopt), ConfigError);
}

// --- pipelines ----------------------------------------------------------------

TEST(PipelineTest, RunsStagesInOrderAndRepeatsExactly) {
  const auto dir = testing::TempDir("pipeline_run");
  const PipelineSpec p = PipelineSpecFromJson(PipelineDoc(), "/base");
  const auto summaries = RunPipeline(p, dir / "a");
  ASSERT_EQ(summaries.size(), 3u);
  const checkpoint::Checkpoint adapted = checkpoint::Load(dir / "a" / "adapt" / "model.w2vs");
  std::vector<std::string> lineage;
  for (const auto& e : adapted.provenance) lineage.push_back(e.kind + ":" + e.name);
  EXPECT_EQ(lineage, (std::vector<std::string>{"init:random", "stage:pre", "surgery:attach_head 4",
                                               "stage:ft", "stage:adapt"}));
  EXPECT_EQ(adapted.provenance[3].source,
            checkpoint::PayloadHash(checkpoint::Load(dir / "a" / "pre" / "model.w2vs")));
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "corpora" / "inhouse" / "manifest.jsonl"));
  const json summary = json::parse(testing::ReadFileBytes(dir / "a" / "summary.json"));
  EXPECT_EQ(summary["stages"][2]["checkpoint"], "adapt/model.w2vs");

  RunPipeline(p, dir / "b");
  for (const char* stage : {"pre", "ft", "adapt"}) {
    for (const char* file : {"model.w2vs", "metrics.jsonl", "eval.jsonl"}) {
      EXPECT_EQ(testing::ReadFileBytes(dir / "a" / stage / file),
                testing::ReadFileBytes(dir / "b" / stage / file))
          << stage << "/" << file;
    }
  }
  EXPECT_EQ(testing::ReadFileBytes(dir / "a" / "summary.json"),
            testing::ReadFileBytes(dir / "b" / "summary.json"));
}

TEST(PipelineTest, JointTrainingConcatenatesManifests) {
  const auto dir = testing::TempDir("pipeline_joint");
  json doc = PipelineDoc();
  doc["stages"] = json::parse(R"([
    {"name": "joint", "objective": "finetune", "train": "corpus:inhouse+corpus:indomain", "dev": "corpus:indomain", "batch_size": 8},
    {"name": "array", "objective": "finetune", "train": ["corpus:inhouse", "corpus:indomain"], "dev": "corpus:indomain", "batch_size": 8}
  ])");
  const PipelineSpec p = PipelineSpecFromJson(doc, "/base");
  EXPECT_EQ(p.stages[0].train, p.stages[1].train);
  const auto summaries = RunPipeline(p, dir);
  // Batch size 8 over 4 + 4 utterances: every step sees both corpora.
  for (const auto& s : summaries) EXPECT_TRUE(s.final_eval.has_value()) << s.name;
  EXPECT_EQ(checkpoint::Load(dir / "joint" / "model.w2vs").model.spec,
            checkpoint::Load(dir / "array" / "model.w2vs").model.spec);
}

}  // namespace
}  // namespace w2vs::training
