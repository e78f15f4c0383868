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


#include "w2vs/verify/suite.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "w2vs/audio/alignment.h"
#include "w2vs/audio/corpus.h"
#include "w2vs/checkpoint/checkpoint.h"
#include "w2vs/common/error.h"
#include "w2vs/encoder/model.h"
#include "w2vs/features/conv_stack.h"
#include "w2vs/losses/losses.h"
#include "w2vs/numerics/conv.h"
#include "w2vs/numerics/param_store.h"
#include "w2vs/numerics/rng.h"
#include "w2vs/training/freeze.h"
#include "w2vs/training/optimizer.h"
#include "w2vs/training/stage.h"
#include "w2vs/verify/gradients.h"

namespace w2vs::verify {

namespace {

using num::CounterRng;
using num::Shape;
using num::Tensor;

bool SameBits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

Tensor Uniform(Shape shape, CounterRng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(rng.Uniform(lo, hi));
  return t;
}

Tensor SmallIntegers(Shape shape, CounterRng& rng) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(static_cast<int>(rng.Below(17)) - 8);
  return t;
}

std::string Fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Collects failures; the check passes when none were recorded.
struct Failures {
  std::vector<std::string> items;
  void Add(std::string s) { items.push_back(std::move(s)); }
  void Expect(bool ok, const std::string& what) {
    if (!ok) Add(what);
  }
  CheckResult Result(std::string name, const std::string& summary) const {
    CheckResult r;
    r.name = std::move(name);
    r.passed = items.empty();
    if (r.passed) {
      r.detail = summary;
    } else {
      r.detail = items.front();
      if (items.size() > 1) r.detail += " (+" + std::to_string(items.size() - 1) + " more)";
    }
    return r;
  }
};

}  // namespace

CheckResult VerifyGeometry() {
  Failures f;
  const features::ConvStackSpec base = features::BaseStack(8);
  const features::FrameGeometry g = features::Geometry(base);
  f.Expect(g.sample_rate == 16000, "base stack is not 16 kHz");
  f.Expect(g.shift_num == 320 && g.shift_den == 1,
           "base stride product " + std::to_string(g.shift_num) + "/" +
               std::to_string(g.shift_den) + ", expected 320");
  f.Expect(g.frame_shift_ms == 20.0, "base frame shift " + Fmt(g.frame_shift_ms) + " ms");
  f.Expect(g.receptive_field_samples == 400,
           "base receptive field " + std::to_string(g.receptive_field_samples) + " samples");
  num::ParamStore base_params;
  CounterRng rng(3, "verify-geometry");
  features::InitStackParams(base, rng, base_params);
  std::vector<std::string> plans = {"first+fold", "first", "last"};
  for (int i = 2; i <= 7; ++i) plans.push_back(std::to_string(i));
  for (const std::string& text : plans) {
    const auto [stack, params] =
        features::AdaptBandwidth(base, base_params, features::ParseSurgeryPlan(text));
    const features::FrameGeometry a = features::Geometry(stack);
    // Exact: shift_num / shift_den samples at 8 kHz must be 20 ms.
    f.Expect(a.sample_rate == 8000 && a.shift_num * 1000 == 20 * a.shift_den * 8000 &&
                 a.frame_shift_ms == 20.0,
             "plan " + text + ": " + Fmt(a.frame_shift_ms) + " ms at " +
                 std::to_string(a.sample_rate) + " Hz");
  }
  return f.Result("geometry", "20 ms / 400 samples at 16 kHz; 20 ms at 8 kHz for " +
                                  std::to_string(plans.size()) + " surgery plans");
}

CheckResult VerifyConvEquivalence(int pairs, std::uint64_t seed) {
  Failures f;
  CounterRng rng(seed, "verify-conv");
  std::size_t compared = 0;
  for (int trial = 0; trial < pairs; ++trial) {
    const std::size_t cin = 1 + rng.Below(3), cout = 1 + rng.Below(4);
    const std::size_t len = 12 + rng.Below(300);
    const std::size_t taps = 1 + rng.Below(10);
    const Tensor x = Uniform(Shape{cin, len}, rng, -1, 1);
    const Tensor k = Uniform(Shape{cout, cin, taps}, rng, -1, 1);
    const Tensor a = num::FractionalConv(x, k, 5, 2);
    const Tensor b = num::Conv1d(num::NearestUpsample2(x), k, 5, 2);
    const std::size_t common = std::min(a.dim(1), b.dim(1));
    for (std::size_t c = 0; c < cout; ++c) {
      for (std::size_t t = 0; t < common; ++t) {
        ++compared;
        if (std::memcmp(&a(c, t), &b(c, t), sizeof(float)) != 0) {
          f.Add("fractional != upsample+dilated conv at pair " + std::to_string(trial) +
                ", channel " + std::to_string(c) + ", frame " + std::to_string(t));
        }
      }
    }
    // Integer-valued data keeps the fold identity free of rounding.
    const Tensor xi = SmallIntegers(Shape{cin, len + 20}, rng);
    const Tensor ki = SmallIntegers(Shape{cout, cin, 10}, rng);
    const Tensor full = num::Conv1d(num::NearestUpsample2(xi), ki, 5, 1);
    const Tensor folded = num::FractionalConv(xi, num::FoldKernel(ki), 5, 2);
    const std::size_t n = std::min(full.dim(1), folded.dim(1));
    for (std::size_t c = 0; c < cout; ++c) {
      for (std::size_t t = 0; t < n; t += 2) {
        if (full(c, t) != folded(c, t)) {
          f.Add("folded kernel differs at pair " + std::to_string(trial) + ", frame " +
                std::to_string(t));
        }
      }
    }
  }
  return f.Result("conv-equivalence", std::to_string(pairs) + " pairs, " +
                                          std::to_string(compared) +
                                          " outputs bit-identical; fold exact at even frames");
}

CheckResult VerifyGradients(int points) {
  Failures f;
  double worst = 0;
  std::string worst_name;
  int checks = 0;
  auto record = [&](const std::string& name, std::uint64_t seed, const num::GradCheckResult& r) {
    ++checks;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
    f.Expect(r.max_rel_error < kGradTolerance,
             name + " seed " + std::to_string(seed) + ": relative error " +
                 Fmt(r.max_rel_error) + " (analytic " + Fmt(r.analytic) + ", numeric " +
                 Fmt(r.numeric) + ")");
  };
  const auto cases = OperatorGradCases();
  for (const OpGradCase& c : cases) {
    for (int s = 0; s < points; ++s) {
      record(c.name, static_cast<std::uint64_t>(s), CheckOperatorGradient(c, static_cast<std::uint64_t>(s)));
    }
  }
  for (int s = 0; s < points; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    record("pretrain_loss", seed, CheckPretrainGradient(seed));
    record("fce_loss", seed, CheckFceGradient(seed));
  }
  return f.Result("gradients", std::to_string(cases.size()) + " operators + 2 losses, " +
                                   std::to_string(checks) + " points, worst " + Fmt(worst) +
                                   " (" + worst_name + ")");
}

CheckResult VerifyClosedFormLosses() {
  Failures f;
  // Contrastive: every candidate equals the target, so all K+1 logits tie.
  {
    CounterRng rng(1, "verify-contrastive");
    const Tensor contexts = Uniform(Shape{101, 8}, rng, -1, 1);
    Tensor targets(Shape{101, 8});
    for (std::size_t t = 0; t < 101; ++t)
      for (std::size_t j = 0; j < 8; ++j) targets(t, j) = 0.25f * static_cast<float>(j) - 0.6f;
    std::vector<std::size_t> mask(101);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i;
    losses::PretrainLossSpec spec;
    spec.num_distractors = 100;
    CounterRng d(2, "verify-distractors");
    const double loss = losses::ContrastiveLoss(contexts, targets, mask, spec, d);
    f.Expect(std::abs(loss - std::log(101.0)) <= 1e-5 && std::abs(loss - 4.61512) <= 1e-5,
             "contrastive at K=100: " + Fmt(loss) + ", expected 4.61512");
  }
  // Diversity: uniform and one-hot codebook usage, V = 8.
  {
    Tensor uniform(Shape{5, 2, 8}, 0.125f);
    Tensor onehot(Shape{5, 2, 8});
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t g = 0; g < 2; ++g) onehot(t, g, 3) = 1.0f;
    const double u = losses::DiversityLoss(uniform);
    const double o = losses::DiversityLoss(onehot);
    f.Expect(std::abs(u) <= 1e-12, "diversity at uniform: " + Fmt(u));
    f.Expect(o == 0.875, "diversity at one-hot: " + Fmt(o) + ", expected exactly 0.875");
  }
  // fCE at uniform logits.
  for (std::size_t classes : {2u, 10u, 37u}) {
    const std::vector<std::size_t> labels(7, classes - 1);
    const double l = losses::FceLoss(Tensor(Shape{7, classes}, 0.3f), labels);
    f.Expect(std::abs(l - std::log(static_cast<double>(classes))) <= 1e-6,
             "fCE at uniform logits, C=" + std::to_string(classes) + ": " + Fmt(l));
  }
  return f.Result("losses", "contrastive ln(K+1), diversity 0 / 0.875, fCE ln C");
}

CheckResult VerifyTruncation() {
  Failures f;
  encoder::ModelSpec spec = encoder::ToyModelSpec(8);
  spec.encoder.num_blocks = 4;
  const encoder::Model full = encoder::InitModel(spec, 11);
  CounterRng rng(4, "verify-truncation");
  audio::AudioBuffer audio;
  audio.sample_rate = spec.stack.sample_rate;
  audio.samples.resize(8000);
  for (float& v : audio.samples) v = static_cast<float>(rng.Uniform(-0.5, 0.5));
  const Tensor features = features::Extract(spec.stack, full.params, audio);
  const std::vector<Tensor> layers = encoder::EncodeAllLayers(full, features);
  for (int n = 1; n <= 4; ++n) {
    const encoder::Model cut = encoder::Truncate(full, n);
    f.Expect(cut.spec.encoder.num_blocks == n, "truncate " + std::to_string(n) + ": wrong depth");
    f.Expect(SameBits(encoder::Encode(cut, features, {}, encoder::Mode::kEval),
                      layers[static_cast<std::size_t>(n)]),
             "truncate " + std::to_string(n) + " differs from the full model's block output");
  }
  return f.Result("truncation", "N=1..4 bit-identical to the 4-block model's block outputs");
}

CheckResult VerifyFreezing(int steps) {
  Failures f;
  encoder::ModelSpec spec;
  spec.name = "freeze-probe";
  spec.stack = features::AdaptBandwidth(features::BaseStack(8), {},
                                        features::ParseSurgeryPlan("last"))
                   .first;
  spec.encoder = {.num_blocks = 2, .dim = 16, .heads = 2, .ffn_dim = 32, .dropout = 0.1,
                  .pos_conv_kernel = 5, .pos_conv_groups = 2};
  spec.quantizer = {.groups = 2, .entries = 8, .code_dim = 16, .temperature = 2.0};
  spec.num_classes = 4;

  audio::CorpusSpec corpus;
  corpus.num_utterances = 4;
  corpus.min_duration_s = corpus.max_duration_s = 0.6;
  corpus.sample_rate = spec.stack.sample_rate;
  corpus.seed = 17;
  corpus.profile.num_classes = 4;
  corpus.profile.min_segment_s = 0.15;
  corpus.profile.max_segment_s = 0.3;
  const features::FrameGeometry geometry = features::Geometry(spec.stack);
  std::vector<losses::Example> data;
  for (int i = 0; i < corpus.num_utterances; ++i) {
    auto [audio, segments] = audio::SynthesizeUtterance(corpus, i);
    losses::Example ex;
    ex.id = "u" + std::to_string(i);
    for (int label : audio::FrameLabels(segments, audio.samples.size(), geometry)) {
      ex.labels.push_back(static_cast<std::size_t>(label));
    }
    ex.audio = std::move(audio);
    data.push_back(std::move(ex));
  }
  std::vector<const losses::Example*> batch;
  for (const auto& e : data) batch.push_back(&e);

  std::vector<std::pair<std::string, training::FreezePlan>> plans;
  for (const char* text : {"none", "output-head-only", "all-except-feature-extractor",
                           "last-1-blocks", "last-2-blocks", "all"}) {
    training::FreezePlan p;
    p.phases = {{std::nullopt, training::ParseTrainableSet(text)}};
    plans.emplace_back(text, p);
  }
  {
    training::FreezePlan p;
    p.phases = {{steps / 2, training::ParseTrainableSet("output-head-only")},
                {std::nullopt, training::ParseTrainableSet("all-except-feature-extractor")}};
    plans.emplace_back("output-head-only until " + std::to_string(steps / 2) +
                           ", then all-except-feature-extractor",
                       p);
  }

  training::StepOptions options;
  options.objective = training::Objective::kFinetune;
  std::size_t frozen_total = 0;
  for (const auto& [label, plan] : plans) {
    encoder::Model model = encoder::InitModel(spec, 5);
    const encoder::Model before = model;
    std::set<std::string> ever_trainable;
    for (int s = 0; s < steps; ++s) {
      for (const auto& n : training::ResolveFreeze(plan, spec, s)) ever_trainable.insert(n);
    }
    const double loss0 = training::Evaluate(model, data, options, 1, 4).loss;
    training::Adam adam;
    for (int s = 0; s < steps; ++s) {
      training::TrainStep(model, batch, options, plan, adam, s, 3e-3,
                          CounterRng(9, "verify-freeze").Split("step", static_cast<std::uint64_t>(s)));
    }
    const double loss1 = training::Evaluate(model, data, options, 1, 4).loss;
    for (const auto& d : checkpoint::Diff(before, model)) {
      if (ever_trainable.count(d.name)) continue;
      ++frozen_total;
      f.Expect(SameBits(model.params.at(d.name), before.params.at(d.name)),
               label + ": frozen " + d.name + " changed");
      f.Expect(d.status == "unchanged" && d.max_abs_delta == 0.0,
               label + ": diff reports " + d.status + " (" + Fmt(d.max_abs_delta) + ") for frozen " +
                   d.name);
    }
    if (ever_trainable.empty()) {
      f.Expect(loss1 == loss0, label + ": loss moved without trainable tensors");
    } else {
      f.Expect(loss1 < loss0, label + ": loss " + Fmt(loss0) + " -> " + Fmt(loss1));
    }
  }
  return f.Result("freezing", std::to_string(plans.size()) + " plans x " + std::to_string(steps) +
                                  " steps, " + std::to_string(frozen_total) +
                                  " frozen tensors bit-identical, loss decreasing");
}

CheckResult VerifyContainer() {
  Failures f;
  encoder::ModelSpec spec = TinyModelSpec();
  spec.num_classes = 3;
  const checkpoint::Checkpoint ckpt = checkpoint::InitCheckpoint(spec, 21);
  const std::string bytes = checkpoint::Serialize(ckpt);
  const checkpoint::Checkpoint back = checkpoint::Deserialize(bytes);
  f.Expect(checkpoint::Serialize(back) == bytes, "re-serialised bytes differ");
  f.Expect(back.model.spec == ckpt.model.spec && back.provenance == ckpt.provenance,
           "spec or provenance differs after the round trip");
  for (const auto& [name, t] : ckpt.model.params) {
    f.Expect(back.model.params.count(name) && SameBits(back.model.params.at(name), t),
             "tensor " + name + " differs after the round trip");
  }
  std::size_t undetected = 0;
  std::string first;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    for (unsigned char mask : {0x01, 0x80, 0xFF}) {
      std::string bad = bytes;
      bad[i] = static_cast<char>(static_cast<unsigned char>(bad[i]) ^ mask);
      try {
        checkpoint::Deserialize(bad);
        if (undetected++ == 0) first = std::to_string(i);
      } catch (const CheckpointError&) {
      }
    }
  }
  f.Expect(undetected == 0, std::to_string(undetected) + " corruptions loaded without error (first at byte " +
                                first + ")");
  return f.Result("container", "round trip exact; " + std::to_string(3 * bytes.size()) +
                                   " single-byte corruptions of " + std::to_string(bytes.size()) +
                                   " bytes all rejected");
}

std::vector<std::string> SuiteNames() {
  return {"geometry", "conv-equivalence", "gradients", "losses", "truncation", "freezing", "container"};
}

CheckResult RunSuite(const std::string& name) {
  static const std::map<std::string, std::function<CheckResult()>> suites = {
      {"geometry", [] { return VerifyGeometry(); }},
      {"conv-equivalence", [] { return VerifyConvEquivalence(); }},
      {"gradients", [] { return VerifyGradients(); }},
      {"losses", [] { return VerifyClosedFormLosses(); }},
      {"truncation", [] { return VerifyTruncation(); }},
      {"freezing", [] { return VerifyFreezing(); }},
      {"container", [] { return VerifyContainer(); }},
  };
  const auto it = suites.find(name);
  if (it == suites.end()) throw Error("unknown verification suite '" + name + "'");
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = it->second();
  } catch (const std::exception& e) {
    r.name = name;
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

nlohmann::json ReportJson(const std::vector<CheckResult>& results) {
  nlohmann::json suites = nlohmann::json::array();
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed;
    suites.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail},
                      {"seconds", r.seconds}});
  }
  return {{"passed", all}, {"suites", suites}};
}

}  // namespace w2vs::verify
