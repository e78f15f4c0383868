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
#include <set>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "test_util.h"
#include "w2vs/common/error.h"
#include "w2vs/encoder/model.h"
#include "w2vs/numerics/ops.h"

namespace w2vs::encoder {
namespace {

using num::Shape;
using num::Tensor;
using testing::RandomTensor;

ModelSpec SmallSpec(int blocks = 4) {
  ModelSpec s = ToyModelSpec(16);
  s.encoder.num_blocks = blocks;
  return s;
}

Tensor Features(const ModelSpec& spec, std::size_t frames, std::uint64_t seed) {
  num::CounterRng rng(seed, "features");
  return RandomTensor(Shape{static_cast<std::size_t>(spec.feature_dim()), frames}, rng);
}

bool BitEqual(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(float)) != 0) return false;
  return true;
}

TEST(ModelSpecTest, ToyDefaults) {
  const ModelSpec s = ToyModelSpec();
  EXPECT_EQ(s.encoder.num_blocks, 4);
  EXPECT_EQ(s.encoder.dim, 64);
  EXPECT_EQ(s.encoder.heads, 4);
  EXPECT_EQ(s.encoder.ffn_dim, 256);
  EXPECT_EQ(s.quantizer.groups, 2);
  EXPECT_EQ(s.quantizer.entries, 32);
  EXPECT_EQ(s.quantizer.code_dim, 64);
  EXPECT_FALSE(s.has_head());
  EXPECT_NO_THROW(ValidateModelSpec(s));
}

TEST(ModelSpecTest, Validation) {
  ModelSpec s = SmallSpec();
  s.encoder.heads = 3;
  EXPECT_THROW(ValidateModelSpec(s), Error);
  s = SmallSpec();
  s.quantizer.code_dim = 63;
  EXPECT_THROW(ValidateModelSpec(s), Error);
  s = SmallSpec();
  s.encoder.pos_conv_kernel = 8;
  EXPECT_THROW(ValidateModelSpec(s), Error);
  s = SmallSpec();
  s.quantizer.entries = 1;
  EXPECT_THROW(ValidateModelSpec(s), Error);
}

TEST(ModelTest, InitIsDeterministicAndMatchesShapes) {
  const ModelSpec s = SmallSpec();
  const Model a = InitModel(s, 7);
  const Model b = InitModel(s, 7);
  const Model c = InitModel(s, 8);
  EXPECT_NO_THROW(CheckParams(s, a.params));
  ASSERT_EQ(a.params.size(), ParamShapes(s).size());
  bool any_diff = false;
  for (const auto& [name, t] : a.params) {
    EXPECT_TRUE(BitEqual(t, b.params.at(name))) << name;
    if (!BitEqual(t, c.params.at(name))) any_diff = true;
  }
  EXPECT_TRUE(any_diff);
}

TEST(ModelTest, CheckParamsReportsProblems) {
  const ModelSpec s = SmallSpec();
  Model m = InitModel(s, 1);
  num::ParamStore missing = m.params;
  missing.erase("pos_conv.bias");
  EXPECT_THROW(CheckParams(s, missing), CheckpointError);
  num::ParamStore extra = m.params;
  extra["bogus"] = Tensor(Shape{1});
  EXPECT_THROW(CheckParams(s, extra), CheckpointError);
  num::ParamStore wrong = m.params;
  wrong["pos_conv.bias"] = Tensor(Shape{3});
  EXPECT_THROW(CheckParams(s, wrong), CheckpointError);
}

TEST(ModelTest, ComponentNames) {
  EXPECT_EQ(ComponentOf("feature_extractor.conv1.weight"), "feature_extractor");
  EXPECT_EQ(ComponentOf("encoder.block3.ffn.fc1.bias"), "block3");
  EXPECT_EQ(ComponentOf("encoder.block12.attn.q.weight"), "block12");
  EXPECT_EQ(ComponentOf("quantizer.codevars"), "quantizer");
  EXPECT_EQ(ComponentOf("head.weight"), "head");
  EXPECT_EQ(BlockIndexOf("encoder.block12.attn.q.weight"), 12);
  EXPECT_EQ(BlockIndexOf("final_proj.weight"), 0);
}

TEST(EncodeTest, EvalIsBitIdenticalAcrossRuns) {
  const Model m = InitModel(SmallSpec(), 3);
  const Tensor f = Features(m.spec, 40, 1);
  const Tensor a = Encode(m, f, {}, Mode::kEval);
  const Tensor b = Encode(m, f, {}, Mode::kEval);
  EXPECT_EQ(a.shape(), (Shape{40, 64}));
  EXPECT_TRUE(BitEqual(a, b));
}

TEST(EncodeTest, TrainModeDropoutDependsOnSeed) {
  const Model m = InitModel(SmallSpec(), 3);
  const Tensor f = Features(m.spec, 20, 1);
  EXPECT_TRUE(BitEqual(Encode(m, f, {}, Mode::kTrain, 5), Encode(m, f, {}, Mode::kTrain, 5)));
  EXPECT_FALSE(BitEqual(Encode(m, f, {}, Mode::kTrain, 5), Encode(m, f, {}, Mode::kTrain, 6)));
  EXPECT_FALSE(BitEqual(Encode(m, f, {}, Mode::kTrain, 5), Encode(m, f, {}, Mode::kEval)));
}

TEST(EncodeTest, ZeroBlocksGivesProjectedPlusPositional) {
  const Model m = InitModel(SmallSpec(0), 3);
  const Tensor f = Features(m.spec, 25, 2);
  // Independent recomputation: per-frame layer norm, projection, then the
  // grouped positional convolution written out with explicit loops.
  const std::size_t c = 16, d = 64, t_len = 25, k = 9, groups = 4, per = d / groups;
  const auto& P = m.params;
  std::vector<double> x(t_len * d);
  for (std::size_t t = 0; t < t_len; ++t) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < c; ++i) mean += f(i, t);
    mean /= c;
    for (std::size_t i = 0; i < c; ++i) var += (f(i, t) - mean) * (f(i, t) - mean);
    var /= c;
    std::vector<double> z(c);
    for (std::size_t i = 0; i < c; ++i) {
      z[i] = (f(i, t) - mean) / std::sqrt(var + 1e-5) * P.at("frontend.feature_norm.gain")[i] +
             P.at("frontend.feature_norm.bias")[i];
    }
    for (std::size_t o = 0; o < d; ++o) {
      double acc = P.at("frontend.post_extract_proj.bias")[o];
      for (std::size_t i = 0; i < c; ++i) acc += P.at("frontend.post_extract_proj.weight")(o, i) * z[i];
      x[t * d + o] = acc;
    }
  }
  const Tensor got = Encode(m, f, {}, Mode::kEval);
  const Tensor& w = P.at("pos_conv.weight");
  double worst = 0;
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t o = 0; o < d; ++o) {
      const std::size_t g = o / per;
      double acc = P.at("pos_conv.bias")[o];
      for (std::size_t j = 0; j < per; ++j) {
        for (std::size_t tap = 0; tap < k; ++tap) {
          const long src = static_cast<long>(t + tap) - static_cast<long>(k / 2);
          if (src < 0 || src >= static_cast<long>(t_len)) continue;
          acc += w(o, j, tap) * x[static_cast<std::size_t>(src) * d + g * per + j];
        }
      }
      const double gelu = 0.5 * acc * (1 + std::erf(acc / std::sqrt(2.0)));
      worst = std::max(worst, std::abs(got(t, o) - (x[t * d + o] + gelu)));
    }
  }
  EXPECT_LT(worst, 2e-4);
}

TEST(EncodeTest, MaskedFramesCarryTheMaskEmbedding) {
  const Model m = InitModel(SmallSpec(), 3);
  Tensor f = Features(m.spec, 30, 4);
  const std::vector<std::size_t> mask = {3, 4, 5, 17};
  num::Graph<float> g;
  const auto p = num::Bind<float>(g, m.params);
  const auto r = EncodeGraph(m.spec, p, g.Constant(f), mask, Mode::kEval, nullptr);
  const Tensor& emb = m.params.at("frontend.mask_embedding");
  for (std::size_t t : mask)
    for (std::size_t j = 0; j < 64; ++j) EXPECT_EQ(r.projected.value()(t, j), emb[j]);
  EXPECT_NE(r.projected.value()(6, 0), emb[0]);

  // The features of masked frames cannot influence anything downstream.
  const Tensor before = Encode(m, f, mask, Mode::kEval);
  for (std::size_t i = 0; i < 16; ++i) f(i, 17) += 0.5f * static_cast<float>(i % 3);
  EXPECT_TRUE(BitEqual(before, Encode(m, f, mask, Mode::kEval)));
}

TEST(EncodeTest, Errors) {
  const Model m = InitModel(SmallSpec(), 3);
  const Tensor f = Features(m.spec, 10, 4);
  EXPECT_THROW(Encode(m, f, {10}, Mode::kEval), Error);
  EXPECT_THROW(Encode(m, Tensor(Shape{15, 10}), {}, Mode::kEval), ShapeError);
}

TEST(TruncateTest, EqualsIntermediateActivationExactly) {
  const Model full = InitModel(SmallSpec(4), 11);
  const Tensor f = Features(full.spec, 33, 5);
  const std::vector<Tensor> layers = EncodeAllLayers(full, f);
  ASSERT_EQ(layers.size(), 5u);
  std::size_t prev_count = 0;
  for (int n = 1; n <= 4; ++n) {
    const Model cut = Truncate(full, n);
    EXPECT_EQ(cut.spec.encoder.num_blocks, n);
    EXPECT_EQ(cut.spec.name, "toy 1-" + std::to_string(n));
    EXPECT_NO_THROW(CheckParams(cut.spec, cut.params));
    EXPECT_TRUE(BitEqual(Encode(cut, f, {}, Mode::kEval), layers[static_cast<std::size_t>(n)]))
        << "N=" << n;
    const std::size_t count = num::CountParameters(cut.params);
    EXPECT_GT(count, prev_count);
    prev_count = count;
  }
}

TEST(TruncateTest, FullDepthIsParameterIdentical) {
  const Model full = InitModel(SmallSpec(4), 11);
  const Model same = Truncate(full, 4);
  ASSERT_EQ(same.params.size(), full.params.size());
  for (const auto& [name, t] : full.params) EXPECT_TRUE(BitEqual(t, same.params.at(name)));
  EXPECT_EQ(Truncate(Truncate(full, 3), 2).spec.name, "toy 1-2");
}

TEST(TruncateTest, RangeErrors) {
  const Model full = InitModel(SmallSpec(4), 11);
  EXPECT_THROW(Truncate(full, 0), SurgeryError);
  EXPECT_THROW(Truncate(full, 5), SurgeryError);
}

TEST(QuantizeTest, StrongLogitsSelectFirstCodeword) {
  ModelSpec s = SmallSpec(1);
  s.quantizer.entries = 2;
  Model m = InitModel(s, 2);
  m.params["quantizer.weight_proj.weight"] = Tensor(Shape{4, 16});
  m.params["quantizer.weight_proj.bias"] = Tensor(Shape{4}, {5.0f, -5.0f, 5.0f, -5.0f});
  num::CounterRng rng(1, "z");
  const Tensor z = RandomTensor(Shape{6, 16}, rng);
  const Quantized q = Quantize(m, z, Mode::kEval);
  const Tensor& cv = m.params.at("quantizer.codevars");
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t g = 0; g < 2; ++g) {
      EXPECT_GT(q.probs(t, g, 0), 0.99f);
      EXPECT_EQ(q.codes[t][g], 0);
      for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(q.targets(t, g * 32 + j), cv(g * 2, j));
    }
  }
}

TEST(QuantizeTest, EvalIsDeterministicAndProbsNormalised) {
  const Model m = InitModel(SmallSpec(1), 2);
  num::CounterRng rng(3, "z");
  const Tensor z = RandomTensor(Shape{20, 16}, rng);
  const Quantized a = Quantize(m, z, Mode::kEval, 1);
  const Quantized b = Quantize(m, z, Mode::kEval, 2);
  EXPECT_TRUE(BitEqual(a.targets, b.targets));
  EXPECT_EQ(a.codes, b.codes);
  EXPECT_EQ(a.probs.shape(), (Shape{20, 2, 32}));
  for (std::size_t t = 0; t < 20; ++t) {
    for (std::size_t g = 0; g < 2; ++g) {
      double sum = 0;
      for (std::size_t v = 0; v < 32; ++v) sum += a.probs(t, g, v);
      EXPECT_NEAR(sum, 1.0, 1e-5);
    }
  }
}

TEST(QuantizeTest, EveryEntryUsedOverRandomLogits) {
  ModelSpec s = SmallSpec(1);
  s.quantizer.entries = 4;
  const Model m = InitModel(s, 9);
  num::CounterRng rng(4, "z");
  const Tensor z = RandomTensor(Shape{1000, 16}, rng);
  const Quantized q = Quantize(m, z, Mode::kTrain, 17);
  std::set<std::pair<int, int>> used;
  for (const auto& codes : q.codes)
    for (std::size_t g = 0; g < codes.size(); ++g) used.emplace(static_cast<int>(g), codes[g]);
  EXPECT_EQ(used.size(), 8u);
}

TEST(MaskTest, Extremes) {
  num::CounterRng rng(1, "mask");
  EXPECT_TRUE(SampleMask({0.0, 10}, 100, rng).empty());
  EXPECT_EQ(SampleMask({1.0, 1}, 50, rng).size(), 50u);
  EXPECT_THROW(SampleMask({0.5, 0}, 10, rng), Error);
  EXPECT_THROW(SampleMask({1.5, 1}, 10, rng), Error);
}

TEST(MaskTest, SortedUniqueAndDeterministic) {
  num::CounterRng a(5, "mask"), b(5, "mask");
  const auto ma = SampleMask({0.2, 4}, 200, a);
  EXPECT_EQ(ma, SampleMask({0.2, 4}, 200, b));
  for (std::size_t i = 1; i < ma.size(); ++i) EXPECT_LT(ma[i - 1], ma[i]);
}

TEST(MaskTest, MeanFractionMatchesSpanUnionProbability) {
  // Frame t stays unmasked iff none of the min(t+1, M) frames able to cover it
  // starts a span: P = (1-p)^min(t+1, M).
  const double p = 0.065;
  const int span = 10;
  const std::size_t frames = 1000;
  double expected = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    expected += 1 - std::pow(1 - p, std::min<double>(t + 1, span));
  }
  expected /= frames;
  double mean = 0;
  for (int seed = 0; seed < 100; ++seed) {
    num::CounterRng rng(static_cast<std::uint64_t>(seed), "mask");
    mean += static_cast<double>(SampleMask({p, span}, frames, rng).size()) / frames;
  }
  mean /= 100;
  EXPECT_GE(mean, 0.35);
  EXPECT_LE(mean, 0.65);
  EXPECT_NEAR(mean, expected, 0.01);
}

TEST(HeadTest, ZeroHeadGivesUniformSoftmax) {
  const Model m = AttachHead(InitModel(SmallSpec(2), 1), 10);
  const Tensor f = Features(m.spec, 12, 1);
  const Tensor logits = OutputHead(m, Encode(m, f, {}, Mode::kEval));
  EXPECT_EQ(logits.shape(), (Shape{12, 10}));
  num::Graph<float> g;
  const Tensor probs = num::Softmax(g.Constant(logits)).value();
  for (float v : probs.data()) EXPECT_FLOAT_EQ(v, 0.1f);
}

TEST(HeadTest, AbsentHeadAndSurgeryErrors) {
  const Model m = InitModel(SmallSpec(2), 1);
  EXPECT_THAT([&] { OutputHead(m, Tensor(Shape{3, 64})); },
              ::testing::ThrowsMessage<Error>(::testing::HasSubstr("pre-training configuration")));
  EXPECT_THROW(DetachHead(m), SurgeryError);
  const Model h = AttachHead(m, 5);
  EXPECT_THROW(AttachHead(h, 5), SurgeryError);
  const Model back = DetachHead(h);
  EXPECT_EQ(back.spec, m.spec);
  EXPECT_EQ(back.params.size(), m.params.size());
  EXPECT_FALSE(m.spec.has_head());  // inputs untouched
}

}  // namespace
}  // namespace w2vs::encoder
