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

#include "w2vs/encoder/model.h"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <string>

#include "w2vs/common/error.h"
#include "w2vs/numerics/ops.h"

namespace w2vs::encoder {

namespace {

using num::BoundParams;
using num::Shape;
using num::Var;

std::size_t Z(int v) { return static_cast<std::size_t>(v); }

const char kFeatureNormGain[] = "frontend.feature_norm.gain";
const char kFeatureNormBias[] = "frontend.feature_norm.bias";
const char kProjWeight[] = "frontend.post_extract_proj.weight";
const char kProjBias[] = "frontend.post_extract_proj.bias";
const char kMaskEmbedding[] = "frontend.mask_embedding";
const char kPosConvWeight[] = "pos_conv.weight";
const char kPosConvBias[] = "pos_conv.bias";
const char kQuantProjWeight[] = "quantizer.weight_proj.weight";
const char kQuantProjBias[] = "quantizer.weight_proj.bias";
const char kCodevars[] = "quantizer.codevars";
const char kFinalProjWeight[] = "final_proj.weight";
const char kFinalProjBias[] = "final_proj.bias";
const char kHeadWeight[] = "head.weight";
const char kHeadBias[] = "head.bias";

template <typename T>
Var<T> Attention(const ModelSpec& spec, const BoundParams<T>& p, const std::string& pre,
                 Var<T> x) {
  const auto heads = Z(spec.encoder.heads);
  const std::size_t head_dim = Z(spec.encoder.dim) / heads;
  Var<T> q = num::Linear(x, p.at(pre + "attn.q.weight"), p.at(pre + "attn.q.bias"));
  Var<T> k = num::Linear(x, p.at(pre + "attn.k.weight"), p.at(pre + "attn.k.bias"));
  Var<T> v = num::Linear(x, p.at(pre + "attn.v.weight"), p.at(pre + "attn.v.bias"));
  const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));
  std::vector<Var<T>> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var<T> qh = num::SliceCols(q, h * head_dim, head_dim);
    Var<T> kh = num::SliceCols(k, h * head_dim, head_dim);
    Var<T> vh = num::SliceCols(v, h * head_dim, head_dim);
    Var<T> weights = num::Softmax(num::Scale(num::MatMulNT(qh, kh), scale));
    outs.push_back(num::MatMul(weights, vh));
  }
  Var<T> joined = heads == 1 ? outs[0] : num::ConcatCols(outs);
  return num::Linear(joined, p.at(pre + "attn.out.weight"), p.at(pre + "attn.out.bias"));
}

template <typename T>
Var<T> MaybeDropout(Var<T> x, double rate, Mode mode, num::CounterRng* rng) {
  if (mode != Mode::kTrain || rate == 0.0) return x;
  if (rng == nullptr) throw Error("encode: train mode with dropout needs an rng");
  return num::Dropout(x, rate, *rng);
}

template <typename T>
Var<T> Block(const ModelSpec& spec, const BoundParams<T>& p, int index, Var<T> x, Mode mode,
             num::CounterRng* rng) {
  const std::string pre = BlockPrefix(index);
  const double rate = spec.encoder.dropout;
  Var<T> h = num::LayerNorm(x, p.at(pre + "attn_norm.gain"), p.at(pre + "attn_norm.bias"));
  x = num::Add(x, MaybeDropout(Attention(spec, p, pre, h), rate, mode, rng));
  h = num::LayerNorm(x, p.at(pre + "ffn_norm.gain"), p.at(pre + "ffn_norm.bias"));
  h = num::Gelu(num::Linear(h, p.at(pre + "ffn.fc1.weight"), p.at(pre + "ffn.fc1.bias")));
  h = num::Linear(h, p.at(pre + "ffn.fc2.weight"), p.at(pre + "ffn.fc2.bias"));
  return num::Add(x, MaybeDropout(h, rate, mode, rng));
}

void InitNormal(num::Tensor& t, num::CounterRng rng, double std_dev) {
  for (float& v : t.data()) v = static_cast<float>(std_dev * rng.Normal());
}

void InitUniform(num::Tensor& t, num::CounterRng rng, double lo, double hi) {
  for (float& v : t.data()) v = static_cast<float>(rng.Uniform(lo, hi));
}

bool EndsWith(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void ValidateModelSpec(const ModelSpec& spec) {
  features::ValidateStack(spec.stack);
  const EncoderSpec& e = spec.encoder;
  const QuantizerSpec& q = spec.quantizer;
  auto fail = [](const std::string& what) { throw Error("model spec: " + what); };
  if (e.num_blocks < 0) fail("encoder.num_blocks must be >= 0");
  if (e.dim < 1 || e.heads < 1 || e.dim % e.heads != 0) {
    fail("encoder.dim must be a positive multiple of encoder.heads");
  }
  if (e.ffn_dim < 1) fail("encoder.ffn_dim must be positive");
  if (e.dropout < 0 || e.dropout >= 1) fail("encoder.dropout must lie in [0, 1)");
  if (e.pos_conv_kernel < 1 || e.pos_conv_kernel % 2 == 0) {
    fail("encoder.pos_conv_kernel must be odd");
  }
  if (e.pos_conv_groups < 1 || e.dim % e.pos_conv_groups != 0) {
    fail("encoder.dim must be a multiple of encoder.pos_conv_groups");
  }
  if (q.groups < 1 || q.code_dim < 1 || q.code_dim % q.groups != 0) {
    fail("quantizer.code_dim must be a positive multiple of quantizer.groups");
  }
  if (q.entries < 2) fail("quantizer.entries must be >= 2");
  if (!(q.temperature > 0)) fail("quantizer.temperature must be positive");
  if (spec.num_classes < 0) fail("num_classes must be >= 0");
}

ModelSpec ToyModelSpec(int conv_channels) {
  ModelSpec s;
  s.stack = features::BaseStack(conv_channels);
  return s;
}

std::string BlockPrefix(int block) { return "encoder.block" + std::to_string(block) + "."; }

int BlockIndexOf(const std::string& name) {
  static const std::regex re(R"(^encoder\.block(\d+)\.)");
  std::smatch m;
  if (!std::regex_search(name, m, re)) return 0;
  return std::stoi(m[1].str());
}

std::string ComponentOf(const std::string& name) {
  if (IsFeatureExtractor(name)) return "feature_extractor";
  if (const int b = BlockIndexOf(name)) return "block" + std::to_string(b);
  const std::size_t dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

bool IsFeatureExtractor(const std::string& name) {
  return name.rfind("feature_extractor.", 0) == 0;
}

bool IsHead(const std::string& name) { return name.rfind("head.", 0) == 0; }

std::vector<std::pair<std::string, Shape>> ParamShapes(const ModelSpec& spec) {
  ValidateModelSpec(spec);
  const std::size_t c = Z(spec.feature_dim());
  const std::size_t d = Z(spec.encoder.dim);
  const std::size_t f = Z(spec.encoder.ffn_dim);
  const std::size_t gv = Z(spec.quantizer.groups * spec.quantizer.entries);
  const std::size_t code = Z(spec.quantizer.code_dim);
  std::vector<std::pair<std::string, Shape>> out = features::StackParamShapes(spec.stack);
  out.emplace_back(kFeatureNormGain, Shape{c});
  out.emplace_back(kFeatureNormBias, Shape{c});
  out.emplace_back(kProjWeight, Shape{d, c});
  out.emplace_back(kProjBias, Shape{d});
  out.emplace_back(kMaskEmbedding, Shape{d});
  out.emplace_back(kPosConvWeight,
                   Shape{d, d / Z(spec.encoder.pos_conv_groups), Z(spec.encoder.pos_conv_kernel)});
  out.emplace_back(kPosConvBias, Shape{d});
  for (int b = 1; b <= spec.encoder.num_blocks; ++b) {
    const std::string pre = BlockPrefix(b);
    out.emplace_back(pre + "attn_norm.gain", Shape{d});
    out.emplace_back(pre + "attn_norm.bias", Shape{d});
    for (const char* m : {"q", "k", "v", "out"}) {
      out.emplace_back(pre + "attn." + m + ".weight", Shape{d, d});
      out.emplace_back(pre + "attn." + m + ".bias", Shape{d});
    }
    out.emplace_back(pre + "ffn_norm.gain", Shape{d});
    out.emplace_back(pre + "ffn_norm.bias", Shape{d});
    out.emplace_back(pre + "ffn.fc1.weight", Shape{f, d});
    out.emplace_back(pre + "ffn.fc1.bias", Shape{f});
    out.emplace_back(pre + "ffn.fc2.weight", Shape{d, f});
    out.emplace_back(pre + "ffn.fc2.bias", Shape{d});
  }
  out.emplace_back(kQuantProjWeight, Shape{gv, c});
  out.emplace_back(kQuantProjBias, Shape{gv});
  out.emplace_back(kCodevars, Shape{gv, code / Z(spec.quantizer.groups)});
  out.emplace_back(kFinalProjWeight, Shape{code, d});
  out.emplace_back(kFinalProjBias, Shape{code});
  if (spec.has_head()) {
    out.emplace_back(kHeadWeight, Shape{Z(spec.num_classes), d});
    out.emplace_back(kHeadBias, Shape{Z(spec.num_classes)});
  }
  std::sort(out.begin(), out.end());
  return out;
}

void CheckParams(const ModelSpec& spec, const num::ParamStore& params) {
  const auto shapes = ParamShapes(spec);
  std::set<std::string> expected;
  for (const auto& [name, shape] : shapes) {
    expected.insert(name);
    auto it = params.find(name);
    if (it == params.end()) throw CheckpointError("missing tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw CheckpointError("tensor '" + name + "' has shape " + num::ShapeString(it->second.shape()) +
                            ", spec implies " + num::ShapeString(shape));
    }
  }
  for (const auto& [name, t] : params) {
    if (!expected.count(name)) throw CheckpointError("unknown tensor name '" + name + "' for this spec");
  }
}

Model InitModel(const ModelSpec& spec, std::uint64_t seed) {
  ValidateModelSpec(spec);
  Model m{spec, {}};
  num::CounterRng root(seed, "init");
  features::InitStackParams(spec.stack, root, m.params);
  for (const auto& [name, shape] : ParamShapes(spec)) {
    if (IsFeatureExtractor(name)) continue;
    num::Tensor t(shape);
    num::CounterRng r = root.Split(name);
    if (EndsWith(name, ".gain")) {
      t = num::Tensor(shape, 1.0f);
    } else if (name == kMaskEmbedding || name == kCodevars) {
      InitUniform(t, r, 0.0, 1.0);
    } else if (name == kPosConvWeight) {
      InitNormal(t, r, std::sqrt(4.0 / (shape[1] * shape[2])));
    } else if (name == kQuantProjWeight) {
      InitNormal(t, r, 1.0);
    } else if (EndsWith(name, ".weight") && !IsHead(name)) {
      InitNormal(t, r, 1.0 / std::sqrt(static_cast<double>(shape[1])));
    }
    m.params[name] = std::move(t);
  }
  return m;
}

// ---------------------------------------------------------------------------

template <typename T>
EncodeResult<T> EncodeGraph(const ModelSpec& spec, const BoundParams<T>& p, Var<T> features,
                            const std::vector<std::size_t>& mask, Mode mode,
                            num::CounterRng* rng) {
  if (features.shape().size() != 2 || features.dim(0) != Z(spec.feature_dim())) {
    throw ShapeError("encode: features of shape " + num::ShapeString(features.shape()) +
                     " do not match feature dim " + std::to_string(spec.feature_dim()));
  }
  const std::size_t frames = features.dim(1);
  for (std::size_t m : mask) {
    if (m >= frames) {
      throw Error("encode: mask index " + std::to_string(m) + " >= frame count " +
                  std::to_string(frames));
    }
  }
  EncodeResult<T> r;
  r.normed_features =
      num::LayerNorm(num::Transpose(features), p.at(kFeatureNormGain), p.at(kFeatureNormBias));
  Var<T> x = num::Linear(r.normed_features, p.at(kProjWeight), p.at(kProjBias));
  if (!mask.empty()) x = num::ReplaceRows(x, mask, p.at(kMaskEmbedding));
  r.projected = x;
  x = MaybeDropout(x, spec.encoder.dropout, mode, rng);
  x = num::Add(x, num::Gelu(num::GroupedConvSame(x, p.at(kPosConvWeight), p.at(kPosConvBias),
                                                 Z(spec.encoder.pos_conv_groups))));
  r.block_input = x;
  for (int b = 1; b <= spec.encoder.num_blocks; ++b) {
    x = Block(spec, p, b, x, mode, rng);
    r.block_outputs.push_back(x);
  }
  r.contexts = x;
  return r;
}

template <typename T>
QuantizeResult<T> QuantizeGraph(const ModelSpec& spec, const BoundParams<T>& p,
                                Var<T> normed_features, QuantizerMode mode, num::CounterRng* rng) {
  const auto groups = Z(spec.quantizer.groups);
  const auto entries = Z(spec.quantizer.entries);
  const std::size_t frames = normed_features.dim(0);
  if (mode != QuantizerMode::kArgmax && rng == nullptr) {
    throw Error("quantize: Gumbel sampling needs an rng");
  }
  Var<T> logits = num::Linear(normed_features, p.at(kQuantProjWeight), p.at(kQuantProjBias));
  const Var<T>& codevars = p.at(kCodevars);
  QuantizeResult<T> r;
  r.codes.assign(frames, std::vector<int>(groups, 0));
  std::vector<Var<T>> parts;
  for (std::size_t g = 0; g < groups; ++g) {
    Var<T> lg = num::SliceCols(logits, g * entries, entries);
    r.soft_probs.push_back(num::Softmax(lg));
    Var<T> select;
    if (mode == QuantizerMode::kArgmax) {
      num::BasicTensor<T> onehot(Shape{frames, entries});
      const auto& lv = lg.value();
      for (std::size_t t = 0; t < frames; ++t) {
        std::size_t best = 0;
        for (std::size_t v = 1; v < entries; ++v)
          if (lv(t, v) > lv(t, best)) best = v;
        onehot(t, best) = T(1);
      }
      select = normed_features.graph().Constant(std::move(onehot));
    } else {
      select = num::GumbelSoftmax(lg, static_cast<T>(spec.quantizer.temperature),
                                  mode == QuantizerMode::kHard, *rng);
    }
    const auto& sv = select.value();
    for (std::size_t t = 0; t < frames; ++t) {
      std::size_t best = 0;
      for (std::size_t v = 1; v < entries; ++v)
        if (sv(t, v) > sv(t, best)) best = v;
      r.codes[t][g] = static_cast<int>(best);
    }
    parts.push_back(num::MatMul(select, num::SliceRows(codevars, g * entries, entries)));
  }
  r.targets = groups == 1 ? parts[0] : num::ConcatCols(parts);
  return r;
}

template <typename T>
Var<T> FinalProjGraph(const BoundParams<T>& p, Var<T> contexts) {
  return num::Linear(contexts, p.at(kFinalProjWeight), p.at(kFinalProjBias));
}

template <typename T>
Var<T> HeadGraph(const ModelSpec& spec, const BoundParams<T>& p, Var<T> contexts) {
  if (!spec.has_head()) {
    throw Error("output head absent: model is in pre-training configuration");
  }
  return num::Linear(contexts, p.at(kHeadWeight), p.at(kHeadBias));
}

template EncodeResult<float> EncodeGraph(const ModelSpec&, const BoundParams<float>&, Var<float>,
                                         const std::vector<std::size_t>&, Mode, num::CounterRng*);
template EncodeResult<double> EncodeGraph(const ModelSpec&, const BoundParams<double>&,
                                          Var<double>, const std::vector<std::size_t>&, Mode,
                                          num::CounterRng*);
template QuantizeResult<float> QuantizeGraph(const ModelSpec&, const BoundParams<float>&,
                                             Var<float>, QuantizerMode, num::CounterRng*);
template QuantizeResult<double> QuantizeGraph(const ModelSpec&, const BoundParams<double>&,
                                              Var<double>, QuantizerMode, num::CounterRng*);
template Var<float> FinalProjGraph(const BoundParams<float>&, Var<float>);
template Var<double> FinalProjGraph(const BoundParams<double>&, Var<double>);
template Var<float> HeadGraph(const ModelSpec&, const BoundParams<float>&, Var<float>);
template Var<double> HeadGraph(const ModelSpec&, const BoundParams<double>&, Var<double>);

// ---------------------------------------------------------------------------

namespace {

num::BoundParams<float> BindConstant(num::Graph<float>& g, const num::ParamStore& params) {
  return num::Bind<float>(g, params, [](const std::string&) { return false; });
}

}  // namespace

num::Tensor Encode(const Model& model, const num::Tensor& features,
                   const std::vector<std::size_t>& mask, Mode mode, std::uint64_t seed) {
  num::Graph<float> g;
  const auto p = BindConstant(g, model.params);
  num::CounterRng rng(seed, "dropout");
  return EncodeGraph(model.spec, p, g.Constant(features), mask, mode, &rng).contexts.value();
}

std::vector<num::Tensor> EncodeAllLayers(const Model& model, const num::Tensor& features) {
  num::Graph<float> g;
  const auto p = BindConstant(g, model.params);
  const auto r = EncodeGraph(model.spec, p, g.Constant(features), {}, Mode::kEval, nullptr);
  std::vector<num::Tensor> out = {r.block_input.value()};
  for (const auto& v : r.block_outputs) out.push_back(v.value());
  return out;
}

Quantized Quantize(const Model& model, const num::Tensor& normed_features, Mode mode,
                   std::uint64_t seed) {
  num::Graph<float> g;
  const auto p = BindConstant(g, model.params);
  num::CounterRng rng(seed, "gumbel");
  const auto r = QuantizeGraph(model.spec, p, g.Constant(normed_features),
                               mode == Mode::kTrain ? QuantizerMode::kHard : QuantizerMode::kArgmax,
                               &rng);
  const auto groups = Z(model.spec.quantizer.groups);
  const auto entries = Z(model.spec.quantizer.entries);
  const std::size_t frames = normed_features.dim(0);
  Quantized q{r.targets.value(), num::Tensor(Shape{frames, groups, entries}), r.codes};
  for (std::size_t g2 = 0; g2 < groups; ++g2) {
    const auto& pv = r.soft_probs[g2].value();
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t v = 0; v < entries; ++v) q.probs(t, g2, v) = pv(t, v);
  }
  return q;
}

num::Tensor OutputHead(const Model& model, const num::Tensor& contexts) {
  num::Graph<float> g;
  const auto p = BindConstant(g, model.params);
  return HeadGraph(model.spec, p, g.Constant(contexts)).value();
}

std::vector<std::size_t> SampleMask(const MaskSpec& spec, std::size_t num_frames,
                                    num::CounterRng& rng) {
  if (spec.start_prob < 0 || spec.start_prob > 1) throw Error("mask: start_prob must lie in [0, 1]");
  if (spec.span < 1) throw Error("mask: span must be >= 1");
  if (num_frames < 1) throw Error("mask: need at least one frame");
  std::vector<char> masked(num_frames, 0);
  for (std::size_t t = 0; t < num_frames; ++t) {
    if (!rng.Bernoulli(spec.start_prob)) continue;
    const std::size_t end = std::min(num_frames, t + Z(spec.span));
    for (std::size_t u = t; u < end; ++u) masked[u] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < num_frames; ++t)
    if (masked[t]) out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------

Model Truncate(const Model& model, int n) {
  const int total = model.spec.encoder.num_blocks;
  if (n < 1 || n > total) {
    throw SurgeryError("truncate " + std::to_string(n) + ": block count must lie in 1.." +
                       std::to_string(total));
  }
  Model out;
  out.spec = model.spec;
  out.spec.encoder.num_blocks = n;
  static const std::regex cut(R"( 1-\d+$)");
  out.spec.name = std::regex_replace(model.spec.name, cut, "") + " 1-" + std::to_string(n);
  for (const auto& [name, t] : model.params) {
    if (BlockIndexOf(name) <= n) out.params.emplace(name, t);
  }
  return out;
}

Model AttachHead(const Model& model, int num_classes) {
  if (model.spec.has_head()) {
    throw SurgeryError("attach_head: model already has a " +
                       std::to_string(model.spec.num_classes) + "-class head");
  }
  if (num_classes < 2) throw SurgeryError("attach_head: need at least 2 classes");
  Model out = model;
  out.spec.num_classes = num_classes;
  const auto d = Z(model.spec.encoder.dim);
  out.params[kHeadWeight] = num::Tensor(Shape{Z(num_classes), d});
  out.params[kHeadBias] = num::Tensor(Shape{Z(num_classes)});
  return out;
}

Model DetachHead(const Model& model) {
  if (!model.spec.has_head()) throw SurgeryError("detach_head: model has no output head");
  Model out = model;
  out.spec.num_classes = 0;
  out.params.erase(kHeadWeight);
  out.params.erase(kHeadBias);
  return out;
}

}  // namespace w2vs::encoder
