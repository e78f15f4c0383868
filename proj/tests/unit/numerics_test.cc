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
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"
#include "w2vs/numerics/conv.h"
#include "w2vs/numerics/grad_check.h"
#include "w2vs/numerics/graph.h"
#include "w2vs/numerics/ops.h"
#include "w2vs/numerics/rng.h"
#include "w2vs/numerics/tensor.h"
#include "w2vs/verify/gradients.h"

namespace w2vs::num {
namespace {

using testing::RandomIntegerTensor;
using testing::RandomTensor;

Tensor Row(std::vector<float> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{1, n}, std::move(v));
}

Tensor Kernel1(std::vector<float> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{1, 1, n}, std::move(v));
}

bool BitEqual(float a, float b) { return std::memcmp(&a, &b, sizeof(float)) == 0; }

// --- conv1d ---------------------------------------------------------------

TEST(Conv1dTest, IdentityKernelSubsamples) {
  Tensor y = Conv1d(Row({1, 2, 3, 4, 5}), Kernel1({1}), 2, 1);
  EXPECT_EQ(y.values(), (std::vector<float>{1, 3, 5}));
}

TEST(Conv1dTest, DilatedPairSum) {
  Tensor y = Conv1d(Row({1, 2, 3, 4, 5, 6}), Kernel1({1, 1}), 1, 2);
  EXPECT_EQ(y.values(), (std::vector<float>{4, 6, 8, 10}));
}

TEST(Conv1dTest, FirstExtractorLayerLength) {
  Tensor x(Shape{1, 16000}, 0.5f);
  Tensor k(Shape{1, 1, 10}, 0.1f);
  EXPECT_EQ(Conv1d(x, k, 5, 1).dim(1), 3199u);
}

TEST(Conv1dTest, ShortInputIsAnError) {
  EXPECT_THROW(Conv1d(Row({1, 2, 3}), Kernel1({1, 1}), 1, 3), InputTooShort);
  EXPECT_THROW(Conv1dOutputLength(4, 3, 1, 2), InputTooShort);
}

// Brute-force sliding window: enumerate every start and accumulate in double.
TEST(Conv1dTest, MatchesSlidingWindowOracle) {
  CounterRng rng(11, "conv-oracle");
  for (std::size_t kernel = 1; kernel <= 5; ++kernel)
    for (std::size_t stride = 1; stride <= 4; ++stride)
      for (std::size_t dilation = 1; dilation <= 3; ++dilation)
        for (std::size_t len = dilation * (kernel - 1) + 1; len <= 64; ++len) {
          Tensor x = RandomTensor(Shape{2, len}, rng);
          Tensor k = RandomTensor(Shape{3, 2, kernel}, rng);
          std::vector<std::vector<double>> expected(3);
          for (std::size_t t = 0; stride * t + dilation * (kernel - 1) < len; ++t)
            for (std::size_t c = 0; c < 3; ++c) {
              double acc = 0;
              for (std::size_t i = 0; i < 2; ++i)
                for (std::size_t j = 0; j < kernel; ++j)
                  acc += double(k(c, i, j)) * x(i, stride * t + dilation * j);
              expected[c].push_back(acc);
            }
          Tensor y = Conv1d(x, k, stride, dilation);
          ASSERT_EQ(y.dim(1), expected[0].size())
              << "L=" << len << " K=" << kernel << " s=" << stride << " d=" << dilation;
          for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t t = 0; t < y.dim(1); ++t)
              ASSERT_NEAR(y(c, t), expected[c][t], 1e-5);
        }
}

// --- fractional conv -------------------------------------------------------

TEST(FractionalConvTest, DeltaKernelReadsStartIndices) {
  std::vector<float> x(13);
  std::iota(x.begin(), x.end(), 100.0f);
  Tensor y = FractionalConv(Row(x), Kernel1({1, 0, 0, 0, 0}), 5, 2);
  EXPECT_EQ(y.values(), (std::vector<float>{100, 102, 105, 107}));
}

TEST(FractionalConvTest, ConstantInput) {
  Tensor x(Shape{1, 40}, 0.25f);
  Tensor y = FractionalConv(x, Kernel1({1, 2, 3, 2}), 5, 2);
  for (float v : y.data()) EXPECT_FLOAT_EQ(v, 0.25f * 8.0f);
}

TEST(FractionalConvTest, Errors) {
  EXPECT_THROW(FractionalConv(Row({1, 2, 3, 4, 5, 6}), Kernel1({1, 1}), 5, 0), Error);
  EXPECT_THROW(FractionalConv(Row({1, 2, 3}), Kernel1({1, 1, 1, 1}), 5, 2), InputTooShort);
}

TEST(FractionalConvTest, BitIdenticalToUpsampledDilatedConv) {
  CounterRng rng(3, "frac-equiv");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t len = 10 + rng.Below(200);
    const std::size_t taps = 1 + rng.Below(std::min<std::size_t>(len, 10));
    Tensor x = RandomTensor(Shape{2, len}, rng);
    Tensor k = RandomTensor(Shape{3, 2, taps}, rng);
    Tensor a = FractionalConv(x, k, 5, 2);
    Tensor b = Conv1d(NearestUpsample2(x), k, 5, 2);
    const std::size_t common = std::min(a.dim(1), b.dim(1));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < common; ++t) ASSERT_TRUE(BitEqual(a(c, t), b(c, t)));
  }
}

// --- fold -------------------------------------------------------------------

TEST(FoldKernelTest, SumsAdjacentPairs) {
  Tensor f = FoldKernel(Kernel1({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
  EXPECT_EQ(f.values(), (std::vector<float>{3, 7, 11, 15, 19}));
  Tensor ones = FoldKernel(Tensor(Shape{2, 1, 10}, 1.0f));
  EXPECT_EQ(ones.shape(), (Shape{2, 1, 5}));
  for (float v : ones.data()) EXPECT_EQ(v, 2.0f);
  EXPECT_THROW(FoldKernel(Kernel1({1, 2, 3})), Error);
}

TEST(FoldKernelTest, EvenOutputsMatchUpsampledConvolution) {
  // Integer-valued data keeps every product and partial sum exact, so the
  // algebraic identity must hold with ==.
  CounterRng rng(5, "fold-identity");
  for (int trial = 0; trial < 30; ++trial) {
    Tensor x = RandomIntegerTensor(Shape{1, 60 + rng.Below(100)}, rng, -8, 8);
    Tensor k = RandomIntegerTensor(Shape{4, 1, 10}, rng, -8, 8);
    Tensor full = Conv1d(NearestUpsample2(x), k, 5, 1);
    Tensor folded = FractionalConv(x, FoldKernel(k), 5, 2);
    const std::size_t common = std::min(full.dim(1), folded.dim(1));
    ASSERT_GT(common, 4u);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t t = 0; t < common; t += 2) ASSERT_EQ(full(c, t), folded(c, t));
  }
}

// --- upsample ---------------------------------------------------------------

TEST(NearestUpsampleTest, Basics) {
  EXPECT_EQ(NearestUpsample2(Tensor::Vector({1, 2, 3})).values(),
            (std::vector<float>{1, 1, 2, 2, 3, 3}));
  CounterRng rng(1, "up");
  Tensor x = RandomTensor(Shape{3, 17}, rng);
  Tensor up = NearestUpsample2(x);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t n = 0; n < 17; ++n) EXPECT_EQ(up(r, 2 * n), x(r, n));
}

// --- core ops ---------------------------------------------------------------

TEST(CoreOpsTest, SoftmaxSymmetry) {
  Graph<float> g;
  Var<float> y = Softmax(g.Constant(Tensor::Vector({0, 0, 0, 0})));
  for (float v : y.value().data()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(CoreOpsTest, SoftmaxRowsSumToOne) {
  CounterRng rng(2, "softmax");
  Graph<float> g;
  Var<float> y = Softmax(g.Constant(RandomTensor(Shape{20, 13}, rng, -5, 5)));
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 13; ++c) s += y.value()(r, c);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  EXPECT_THROW(Softmax(g.Constant(Tensor::Scalar(1.0f))), ShapeError);
}

TEST(CoreOpsTest, CosineOfSelfIsOne) {
  CounterRng rng(4, "cos");
  Graph<float> g;
  Var<float> v = g.Constant(RandomTensor(Shape{6, 9}, rng));
  for (float c : CosineSimilarity(v, v).value().data()) EXPECT_NEAR(c, 1.0f, 1e-6);
}

TEST(CoreOpsTest, HardGumbelIsOneHotAndSoftSumsToOne) {
  CounterRng logits_rng(7, "logits");
  Tensor logits = RandomTensor(Shape{50, 8}, logits_rng, -3, 3);
  Graph<float> g;
  CounterRng hard_rng(7, "gumbel");
  Var<float> hard = GumbelSoftmax(g.Constant(logits), 2.0f, true, hard_rng);
  CounterRng soft_rng(7, "gumbel");
  Var<float> soft = GumbelSoftmax(g.Constant(logits), 2.0f, false, soft_rng);
  for (std::size_t r = 0; r < 50; ++r) {
    int ones = 0, zeros = 0;
    double s = 0;
    for (std::size_t c = 0; c < 8; ++c) {
      const float h = hard.value()(r, c);
      ones += h == 1.0f;
      zeros += h == 0.0f;
      s += soft.value()(r, c);
    }
    EXPECT_EQ(ones, 1);
    EXPECT_EQ(zeros, 7);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  CounterRng bad(1, "x");
  EXPECT_THROW(GumbelSoftmax(g.Constant(logits), 0.0f, true, bad), Error);
}

TEST(CoreOpsTest, StraightThroughGradientEqualsSoftGradient) {
  CounterRng init(8, "st");
  Tensor logits = RandomTensor(Shape{5, 4}, init);
  Tensor weights = RandomTensor(Shape{5, 4}, init);
  auto grad_of = [&](bool hard) {
    Graph<float> g;
    Var<float> l = g.Parameter(logits);
    CounterRng rng(9, "st-noise");
    Var<float> y = GumbelSoftmax(l, 2.0f, hard, rng);
    g.Backward(Sum(Mul(y, g.Constant(weights))));
    return g.Grad(l);
  };
  EXPECT_EQ(grad_of(true), grad_of(false));
}

TEST(CoreOpsTest, DropoutRejectsBadRateAndIsDeterministic) {
  Graph<float> g;
  Var<float> x = g.Constant(Tensor(Shape{100}, 1.0f));
  CounterRng r1(3, "dropout", 5), r2(3, "dropout", 5);
  EXPECT_EQ(Dropout(x, 0.3, r1).value(), Dropout(x, 0.3, r2).value());
  EXPECT_THROW(Dropout(x, 1.0, r1), Error);
}

TEST(CoreOpsTest, NonFiniteValuesRejected) {
  Graph<float> g;
  Var<float> x = g.Constant(Tensor::Vector({1e30f, 1.0f}));
  EXPECT_THROW(Mul(x, x), NonFiniteError);
  EXPECT_THROW(Log(g.Constant(Tensor::Vector({0.0f}))), NonFiniteError);
}

// --- backward ---------------------------------------------------------------

TEST(BackwardTest, SumGivesOnes) {
  Graph<float> g;
  Var<float> p = g.Parameter(Tensor(Shape{3, 4}, 0.7f));
  g.Backward(Sum(p));
  const Tensor grad = g.Grad(p);
  for (float v : grad.data()) EXPECT_EQ(v, 1.0f);
}

TEST(BackwardTest, IndependentParameterHasZeroGradient) {
  Graph<float> g;
  Var<float> used = g.Parameter(Tensor(Shape{3}, 2.0f));
  Var<float> unused = g.Parameter(Tensor(Shape{5}, 1.0f));
  g.Backward(Sum(Mul(used, used)));
  const Tensor g_unused = g.Grad(unused), g_used = g.Grad(used);
  for (float v : g_unused.data()) EXPECT_EQ(v, 0.0f);
  for (float v : g_used.data()) EXPECT_EQ(v, 4.0f);
}

TEST(BackwardTest, NonScalarLossIsAnError) {
  Graph<float> g;
  Var<float> p = g.Parameter(Tensor(Shape{3}, 2.0f));
  EXPECT_THROW(g.Backward(Mul(p, p)), ShapeError);
}

// --- grad_check -------------------------------------------------------------

TEST(GradCheckTest, SquareAtThree) {
  GradCheckResult r = GradCheck(
      [](Graph<double>&, const std::vector<Var<double>>& in) { return Sum(Mul(in[0], in[0])); },
      {TensorD::Vector({3.0})}, 1e-3);
  EXPECT_DOUBLE_EQ(r.analytic, 6.0);
  EXPECT_NEAR(r.numeric, 6.0, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(GradCheckTest, ConstantFunction) {
  GradCheckResult r = GradCheck(
      [](Graph<double>& g, const std::vector<Var<double>>&) {
        return g.Constant(TensorD::Scalar(4.0));
      },
      {TensorD::Vector({1.0, 2.0})}, 1e-3);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradCheckTest, RejectsBadEpsilonAndNonFiniteValues) {
  auto f = [](Graph<double>&, const std::vector<Var<double>>& in) { return Sum(Log(in[0])); };
  EXPECT_THROW(GradCheck(f, {TensorD::Vector({1.0})}, 0.1), Error);
  EXPECT_THROW(GradCheck(f, {TensorD::Vector({0.0005})}, 1e-3), NonFiniteError);
}

TEST(GradCheckTest, EveryOperatorPassesAtTenSeededPoints) {
  for (const verify::OpGradCase& c : verify::OperatorGradCases()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const GradCheckResult r = verify::CheckOperatorGradient(c, seed);
      EXPECT_LT(r.max_rel_error, 1e-3)
          << c.name << " seed " << seed << " analytic " << r.analytic << " numeric " << r.numeric;
    }
  }
}

// x -> sum(x^2) with a backward that is off by a factor on one coordinate.
Var<double> BrokenSquareSum(Var<double> x) {
  double total = 0;
  for (double v : x.value().data()) total += v * v;
  const int ix = x.id();
  return x.graph().Record("broken", TensorD::Scalar(total), {x},
                          [x, ix](Graph<double>& g, const TensorD& go) {
                            auto& gx = g.GradFor(ix);
                            for (std::size_t i = 0; i < gx.size(); ++i)
                              gx[i] += go[0] * (i == 3 ? 2.5 : 2.0) * x.value()[i];
                          });
}

TEST(GradCheckTest, DirectionalCheckAgreesOnCorrectAndCatchesWrongGradients) {
  CounterRng rng(1, "directional");
  const std::vector<TensorD> point = {RandomTensor<double>(Shape{4, 5}, rng)};
  const auto good = DirectionalGradCheck(
      [](Graph<double>&, const std::vector<Var<double>>& in) { return Sum(Mul(in[0], in[0])); },
      point, 1e-3, rng, 4);
  EXPECT_LT(good.max_rel_error, 1e-9);
  EXPECT_EQ(good.coordinates, 4u);
  const auto bad = DirectionalGradCheck(
      [](Graph<double>&, const std::vector<Var<double>>& in) { return BrokenSquareSum(in[0]); },
      point, 1e-3, rng, 4);
  EXPECT_GT(bad.max_rel_error, 1e-3);
  const auto zero = DirectionalGradCheck(
      [](Graph<double>& g, const std::vector<Var<double>>&) {
        return g.Constant(TensorD::Scalar(1.0));
      },
      point, 1e-3, rng, 2);
  EXPECT_EQ(zero.max_rel_error, 0.0);
}

TEST(DeterminismTest, SameSeedSameBits) {
  auto run = [] {
    CounterRng rng(99, "det");
    Graph<float> g;
    Var<float> x = g.Parameter(RandomTensor(Shape{4, 16}, rng));
    Var<float> k = g.Parameter(RandomTensor(Shape{3, 4, 3}, rng));
    CounterRng drop(99, "drop", 1);
    Var<float> y = Dropout(Gelu(Conv1d(x, k, 2, 1)), 0.2, drop);
    g.Backward(Sum(y));
    return std::make_pair(y.value(), g.Grad(k));
  };
  EXPECT_EQ(run(), run());
}

TEST(RngTest, StreamsAreKeyedNotSequential) {
  CounterRng a(1, "mask", 3, 0), b(1, "mask", 3, 0), c(1, "mask", 4, 0);
  EXPECT_EQ(a.NextU64(), b.NextU64());
  EXPECT_NE(CounterRng(1, "mask", 3, 0).NextU64(), c.NextU64());
  CounterRng u(5, "below");
  for (int i = 0; i < 1000; ++i) EXPECT_LT(u.Below(7), 7u);
}

}  // namespace
}  // namespace w2vs::num
