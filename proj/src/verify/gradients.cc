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


#include "w2vs/verify/gradients.h"

#include "w2vs/losses/losses.h"
#include "w2vs/numerics/ops.h"

namespace w2vs::verify {

namespace {

using num::CounterRng;
using num::Graph;
using num::Shape;
using num::TensorD;
using num::Var;

TensorD RandomD(const Shape& shape, CounterRng& rng) {
  TensorD t(shape);
  for (double& v : t.data()) v = rng.Uniform(-1.0, 1.0);
  return t;
}

constexpr std::size_t kTinyFrames = 4;

losses::Example TinyExample(const encoder::ModelSpec& spec, std::uint64_t seed, int classes) {
  const features::FrameGeometry geo = features::Geometry(spec.stack);
  // Shortest input producing kTinyFrames frames.
  std::size_t n = geo.receptive_field_samples;
  while (geo.OutputLength(n) < kTinyFrames) ++n;
  CounterRng rng(seed, "gradcheck-audio");
  losses::Example ex;
  ex.id = "probe";
  ex.audio.sample_rate = spec.stack.sample_rate;
  ex.audio.samples.resize(n);
  for (float& v : ex.audio.samples) v = static_cast<float>(rng.Uniform(-0.5, 0.5));
  for (std::size_t t = 0; t < kTinyFrames; ++t) {
    ex.labels.push_back(static_cast<std::size_t>(rng.Below(static_cast<std::uint64_t>(classes))));
  }
  return ex;
}

num::GradCheckResult CheckModelLoss(
    const encoder::Model& model, std::uint64_t seed,
    const std::function<Var<double>(const num::BoundParams<double>&)>& loss) {
  std::vector<std::string> names;
  std::vector<TensorD> point;
  for (const auto& [name, t] : model.params) {
    names.push_back(name);
    point.push_back(t.Cast<double>());
  }
  CounterRng rng(seed, "gradcheck-directions");
  return num::DirectionalGradCheck(
      [&](Graph<double>&, const std::vector<Var<double>>& leaves) {
        num::BoundParams<double> bound;
        for (std::size_t i = 0; i < names.size(); ++i) bound.Set(names[i], leaves[i]);
        return loss(bound);
      },
      point, kGradEpsilon, rng, kLossDirections);
}

}  // namespace

std::vector<OpGradCase> OperatorGradCases() {
  using namespace num;  // NOLINT: the table reads as a list of operators
  return {
      {"add", {{3, 4}, {3, 4}}, [](auto&, const auto& v) { return Add(v[0], v[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](auto&, const auto& v) { return Mul(v[0], v[1]); }},
      {"scale", {{5}}, [](auto&, const auto& v) { return Scale(v[0], 1.7); }},
      {"add_scalar", {{5}}, [](auto&, const auto& v) { return AddScalar(v[0], -0.3); }},
      {"sum", {{2, 3}}, [](auto&, const auto& v) { return Sum(v[0]); }},
      {"mean", {{2, 3}}, [](auto&, const auto& v) { return Mean(v[0]); }},
      {"mean_rows", {{4, 3}}, [](auto&, const auto& v) { return MeanRows(v[0]); }},
      {"reshape", {{2, 6}}, [](auto&, const auto& v) { return Reshape(v[0], Shape{3, 4}); }},
      {"transpose", {{2, 5}}, [](auto&, const auto& v) { return Transpose(v[0]); }},
      {"slice_concat", {{3, 6}},
       [](auto&, const auto& v) {
         return ConcatCols<double>({SliceCols(v[0], 4, 2), SliceCols(v[0], 0, 3)});
       }},
      {"slice_rows", {{5, 2}}, [](auto&, const auto& v) { return SliceRows(v[0], 1, 3); }},
      {"gather_rows", {{4, 3}}, [](auto&, const auto& v) { return GatherRows(v[0], {2, 0, 2, 3}); }},
      {"replace_rows", {{5, 3}, {3}},
       [](auto&, const auto& v) { return ReplaceRows(v[0], {1, 3}, v[1]); }},
      {"matmul", {{3, 4}, {4, 2}}, [](auto&, const auto& v) { return MatMul(v[0], v[1]); }},
      {"matmul_nt", {{3, 4}, {5, 4}}, [](auto&, const auto& v) { return MatMulNT(v[0], v[1]); }},
      {"linear", {{4, 3}, {5, 3}, {5}},
       [](auto&, const auto& v) { return Linear(v[0], v[1], v[2]); }},
      {"layer_norm", {{3, 6}, {6}, {6}},
       [](auto&, const auto& v) { return LayerNorm(v[0], v[1], v[2]); }},
      {"gelu", {{12}}, [](auto&, const auto& v) { return Gelu(v[0]); }},
      {"exp", {{6}}, [](auto&, const auto& v) { return Exp(v[0]); }},
      {"log", {{6}}, [](auto&, const auto& v) { return Log(AddScalar(Mul(v[0], v[0]), 0.5)); }},
      {"softmax", {{3, 5}}, [](auto&, const auto& v) { return Softmax(v[0]); }},
      {"log_softmax", {{3, 5}}, [](auto&, const auto& v) { return LogSoftmax(v[0]); }},
      {"cosine_similarity", {{4, 5}, {4, 5}},
       [](auto&, const auto& v) { return CosineSimilarity(v[0], v[1]); }},
      {"gumbel_softmax_soft", {{3, 6}},
       [](auto&, const auto& v) {
         CounterRng rng(17, "gumbel-check");
         return GumbelSoftmax(v[0], 2.0, false, rng);
       }},
      {"dropout", {{10}},
       [](auto&, const auto& v) {
         CounterRng rng(23, "dropout-check");
         return Dropout(v[0], 0.3, rng);
       }},
      {"cross_entropy", {{4, 6}},
       [](auto&, const auto& v) { return CrossEntropy(v[0], {0, 5, 2, 2}); }},
      {"exp_entropy", {{2, 5}},
       [](auto&, const auto& v) { return ExpEntropy(Softmax(v[0])); }},
      {"conv1d", {{2, 23}, {3, 2, 4}},
       [](auto&, const auto& v) { return Conv1d(v[0], v[1], 3, 2); }},
      {"fractional_conv", {{2, 23}, {3, 2, 5}},
       [](auto&, const auto& v) { return FractionalConv(v[0], v[1], 5, 2); }},
      {"grouped_conv", {{7, 4}, {4, 2, 3}, {4}},
       [](auto&, const auto& v) { return GroupedConvSame(v[0], v[1], v[2], 2); }},
  };
}

num::GradCheckResult CheckOperatorGradient(const OpGradCase& c, std::uint64_t seed) {
  CounterRng rng(seed, c.name);
  std::vector<TensorD> point;
  for (const Shape& s : c.inputs) point.push_back(RandomD(s, rng));
  Graph<double> probe;
  std::vector<Var<double>> probe_in;
  for (const auto& p : point) probe_in.push_back(probe.Constant(p));
  const TensorD readout = RandomD(c.op(probe, probe_in).shape(), rng);
  return num::GradCheck(
      [&](Graph<double>& g, const std::vector<Var<double>>& in) {
        return num::Sum(num::Mul(c.op(g, in), g.Constant(readout)));
      },
      point, kGradEpsilon);
}

encoder::ModelSpec TinyModelSpec() {
  encoder::ModelSpec s;
  s.name = "tiny";
  // Three conv layers rather than seven: through the full stack the third
  // derivative terms alone push eps = 1e-3 central differences past 1e-3.
  s.stack.sample_rate = audio::kWidebandRate;
  const int kernels[] = {10, 3, 2};
  const int strides[] = {5, 2, 2};
  for (int i = 0; i < 3; ++i) {
    features::ConvLayerSpec l;
    l.in_channels = i == 0 ? 1 : 8;
    l.out_channels = 8;
    l.kernel = kernels[i];
    l.stride = strides[i];
    s.stack.layers.push_back(l);
  }
  s.encoder = {.num_blocks = 1, .dim = 8, .heads = 2, .ffn_dim = 16, .dropout = 0.0,
               .pos_conv_kernel = 3, .pos_conv_groups = 2};
  s.quantizer = {.groups = 2, .entries = 4, .code_dim = 8, .temperature = 2.0};
  return s;
}

num::GradCheckResult CheckPretrainGradient(std::uint64_t seed) {
  const encoder::Model model = encoder::InitModel(TinyModelSpec(), seed);
  const losses::Example ex = TinyExample(model.spec, seed, 2);
  losses::PretrainLossSpec spec;
  spec.num_distractors = static_cast<int>(kTinyFrames) - 1;
  losses::PretrainOptions options;
  options.mask = {1.0, 1};
  options.mode = encoder::Mode::kEval;
  options.quantizer = encoder::QuantizerMode::kSoft;
  return CheckModelLoss(model, seed, [&](const num::BoundParams<double>& p) {
    CounterRng rng(seed, "gradcheck-pretrain");
    return losses::PretrainLossGraph<double>(model.spec, p, {&ex}, spec, options, rng).total;
  });
}

num::GradCheckResult CheckFceGradient(std::uint64_t seed) {
  constexpr int kClasses = 3;
  encoder::Model model = encoder::AttachHead(encoder::InitModel(TinyModelSpec(), seed), kClasses);
  CounterRng head_rng(seed, "gradcheck-head");
  for (const char* name : {"head.weight", "head.bias"}) {
    for (float& v : model.params.at(name).data()) v = static_cast<float>(head_rng.Uniform(-1, 1));
  }
  const losses::Example ex = TinyExample(model.spec, seed, kClasses);
  return CheckModelLoss(model, seed, [&](const num::BoundParams<double>& p) {
    CounterRng rng(seed, "gradcheck-fce");
    return losses::FinetuneLossGraph<double>(model.spec, p, {&ex}, encoder::Mode::kEval, rng).loss;
  });
}

}  // namespace w2vs::verify
