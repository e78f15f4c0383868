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


#include "w2vs/losses/losses.h"

#include <cmath>
#include <numeric>
#include <string>

#include "w2vs/common/error.h"
#include "w2vs/features/conv_stack.h"
#include "w2vs/numerics/ops.h"

namespace w2vs::losses {

namespace {

using num::Shape;
using num::Var;

constexpr double kNormTolerance = 1e-4;

}  // namespace

void ValidatePretrainLossSpec(const PretrainLossSpec& spec) {
  if (spec.num_distractors < 1) throw Error("loss spec: num_distractors must be >= 1");
  if (!(spec.temperature > 0)) throw Error("loss spec: temperature must be positive");
  if (!(spec.diversity_weight >= 0)) throw Error("loss spec: diversity_weight must be >= 0");
}

std::vector<std::vector<std::size_t>> SampleDistractors(std::size_t num_masked, int k,
                                                        num::CounterRng& rng) {
  const auto kk = static_cast<std::size_t>(k);
  if (k < 1 || num_masked < kk + 1) {
    throw Error("distractors: need at least " + std::to_string(kk + 1) + " masked frames, got " +
                std::to_string(num_masked));
  }
  std::vector<std::vector<std::size_t>> out(num_masked);
  std::vector<std::size_t> pool(num_masked - 1);
  for (std::size_t i = 0; i < num_masked; ++i) {
    // Every position except i, then a partial Fisher-Yates shuffle.
    for (std::size_t j = 0, w = 0; j < num_masked; ++j)
      if (j != i) pool[w++] = j;
    for (std::size_t j = 0; j < kk; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.Below(pool.size() - j));
      std::swap(pool[j], pool[pick]);
    }
    out[i].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(kk));
  }
  return out;
}

template <typename T>
Var<T> ContrastiveLogits(Var<T> contexts, Var<T> targets,
                         const std::vector<std::vector<std::size_t>>& distractors,
                         double temperature) {
  const std::size_t m = contexts.dim(0);
  if (targets.dim(0) != m || distractors.size() != m) {
    throw ShapeError("contrastive: contexts, targets and distractor lists disagree on frame count");
  }
  const std::size_t k = m == 0 ? 0 : distractors[0].size();
  std::vector<Var<T>> columns;
  columns.push_back(num::Reshape(num::CosineSimilarity(contexts, targets), Shape{m, 1}));
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<std::size_t> rows(m);
    for (std::size_t i = 0; i < m; ++i) rows[i] = distractors[i].at(j);
    columns.push_back(num::Reshape(
        num::CosineSimilarity(contexts, num::GatherRows(targets, rows)), Shape{m, 1}));
  }
  return num::Scale(num::ConcatCols(columns), static_cast<T>(1.0 / temperature));
}

template <typename T>
Var<T> ContrastiveLossGraph(Var<T> contexts, Var<T> targets, const std::vector<std::size_t>& mask,
                            const PretrainLossSpec& spec, num::CounterRng& rng) {
  ValidatePretrainLossSpec(spec);
  const auto needed = static_cast<std::size_t>(spec.num_distractors) + 1;
  if (mask.size() < needed) {
    throw TrainingError("contrastive loss needs at least K+1 = " + std::to_string(needed) +
                        " masked frames in an utterance but only " + std::to_string(mask.size()) +
                        " are masked; lower num_distractors or raise the mask start_prob");
  }
  const auto distractors = SampleDistractors(mask.size(), spec.num_distractors, rng);
  Var<T> logits = ContrastiveLogits(num::GatherRows(contexts, mask),
                                    num::GatherRows(targets, mask), distractors, spec.temperature);
  return num::CrossEntropy(logits, std::vector<std::size_t>(mask.size(), 0));
}

template <typename T>
Var<T> DiversityFromMeanProbs(const std::vector<Var<T>>& mean_probs) {
  if (mean_probs.empty()) throw Error("diversity: no codebook groups");
  const std::size_t v = mean_probs[0].value().size();
  const auto gv = static_cast<T>(mean_probs.size() * v);
  Var<T> total = num::Sum(num::ExpEntropy(mean_probs[0]));
  for (std::size_t g = 1; g < mean_probs.size(); ++g) {
    total = num::Add(total, num::Sum(num::ExpEntropy(mean_probs[g])));
  }
  return num::Scale(num::AddScalar(total, -gv), T(-1) / gv);
}

template <typename T>
Var<T> FceLossGraph(Var<T> logits, const std::vector<std::size_t>& labels) {
  if (labels.size() != logits.dim(0)) {
    throw ShapeError("fce: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(logits.dim(0)) + " frames");
  }
  return num::CrossEntropy(logits, labels);
}

// ---------------------------------------------------------------------------

double ContrastiveLoss(const num::Tensor& contexts, const num::Tensor& targets,
                       const std::vector<std::size_t>& mask, const PretrainLossSpec& spec,
                       num::CounterRng& rng) {
  num::Graph<float> g;
  return ContrastiveLossGraph(g.Constant(contexts), g.Constant(targets), mask, spec, rng)
      .value()
      .item();
}

namespace {

// Mean over frames of a [T x G x V] tensor, one [V] tensor per group, after
// checking normalisation.
std::vector<num::TensorD> MeanProbs(const num::Tensor& probs) {
  if (probs.shape().size() != 3 || probs.dim(0) == 0) {
    throw ShapeError("diversity: expected non-empty [T x G x V] probabilities, got " +
                     num::ShapeString(probs.shape()));
  }
  const std::size_t frames = probs.dim(0), groups = probs.dim(1), v = probs.dim(2);
  std::vector<num::TensorD> out(groups, num::TensorD(Shape{v}));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t g = 0; g < groups; ++g) {
      double sum = 0;
      for (std::size_t i = 0; i < v; ++i) {
        const double p = probs(t, g, i);
        if (!(p >= 0)) throw Error("diversity: negative or non-finite probability");
        sum += p;
        out[g][i] += p;
      }
      if (std::abs(sum - 1.0) > kNormTolerance) {
        throw Error("diversity: code probabilities of frame " + std::to_string(t) + ", group " +
                    std::to_string(g) + " sum to " + std::to_string(sum) + ", not 1");
      }
    }
  }
  for (auto& m : out)
    for (double& p : m.data()) p /= static_cast<double>(frames);
  return out;
}

}  // namespace

double DiversityLoss(const num::Tensor& probs) {
  const auto mean = MeanProbs(probs);
  num::Graph<double> g;
  std::vector<Var<double>> vars;
  for (const auto& m : mean) vars.push_back(g.Constant(m));
  return DiversityFromMeanProbs(vars).value().item();
}

double CodebookPerplexity(const num::Tensor& probs) {
  const auto mean = MeanProbs(probs);
  num::Graph<double> g;
  double total = 0;
  for (const auto& m : mean) total += num::ExpEntropy(g.Constant(m)).value()[0];
  return total / static_cast<double>(mean.size());
}

double FceLoss(const num::Tensor& logits, const std::vector<std::size_t>& labels) {
  num::Graph<float> g;
  return FceLossGraph(g.Constant(logits), labels).value().item();
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
Var<T> ExtractFeatures(const encoder::ModelSpec& model, const num::BoundParams<T>& params,
                       const Example& ex, num::Graph<T>& g) {
  features::CheckRate(model.stack, ex.audio.sample_rate);
  num::BasicTensor<T> audio(Shape{1, ex.audio.size()});
  for (std::size_t i = 0; i < ex.audio.size(); ++i) audio[i] = static_cast<T>(ex.audio.samples[i]);
  return features::ExtractGraph(model.stack, params, g.Constant(std::move(audio)));
}

template <typename T>
num::Graph<T>& GraphOf(const num::BoundParams<T>& params) {
  if (params.vars().empty()) throw Error("loss: no parameters bound");
  return params.vars().begin()->second.graph();
}

}  // namespace

template <typename T>
PretrainTerms<T> PretrainLossGraph(const encoder::ModelSpec& model,
                                   const num::BoundParams<T>& params,
                                   const std::vector<const Example*>& batch,
                                   const PretrainLossSpec& spec, const PretrainOptions& options,
                                   num::CounterRng& rng) {
  ValidatePretrainLossSpec(spec);
  if (batch.empty()) throw TrainingError("pretrain loss: empty batch");
  num::Graph<T>& g = GraphOf(params);
  const auto needed = static_cast<std::size_t>(spec.num_distractors) + 1;
  const auto groups = static_cast<std::size_t>(model.quantizer.groups);

  PretrainTerms<T> out;
  std::vector<Var<T>> weighted_losses;
  std::vector<std::vector<Var<T>>> prob_sums(groups);
  for (std::size_t u = 0; u < batch.size(); ++u) {
    const Example& ex = *batch[u];
    Var<T> feats = ExtractFeatures(model, params, ex, g);
    const std::size_t frames = feats.dim(1);
    if (frames < needed) {
      throw TrainingError("utterance '" + ex.id + "' has " + std::to_string(frames) +
                          " frames, fewer than K+1 = " + std::to_string(needed) +
                          "; lower num_distractors or use longer utterances");
    }
    std::vector<std::size_t> mask;
    for (int a = 0; a < std::max(1, options.mask_attempts) && mask.size() < needed; ++a) {
      num::CounterRng mrng = rng.Split("mask", u, static_cast<std::uint64_t>(a));
      mask = encoder::SampleMask(options.mask, frames, mrng);
    }
    num::CounterRng drop = rng.Split("dropout", u);
    num::CounterRng gumbel = rng.Split("gumbel", u);
    num::CounterRng negatives = rng.Split("distractors", u);
    const auto enc = encoder::EncodeGraph(model, params, feats, mask, options.mode, &drop);
    const auto q = encoder::QuantizeGraph(model, params, enc.normed_features, options.quantizer,
                                          &gumbel);
    Var<T> projected = encoder::FinalProjGraph(params, enc.contexts);
    Var<T> c = ContrastiveLossGraph(projected, q.targets, mask, spec, negatives);
    const auto m = static_cast<T>(mask.size());
    weighted_losses.push_back(num::Scale(c, m));
    for (std::size_t gi = 0; gi < groups; ++gi) {
      prob_sums[gi].push_back(num::Scale(num::MeanRows(num::GatherRows(q.soft_probs[gi], mask)), m));
    }
    out.masked_frames += mask.size();
    out.frames += frames;
  }
  const T inv = T(1) / static_cast<T>(out.masked_frames);
  auto sum_all = [](const std::vector<Var<T>>& parts) {
    Var<T> acc = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) acc = num::Add(acc, parts[i]);
    return acc;
  };
  out.contrastive = num::Scale(sum_all(weighted_losses), inv);
  std::vector<Var<T>> mean_probs;
  for (auto& parts : prob_sums) mean_probs.push_back(num::Scale(sum_all(parts), inv));
  out.diversity = DiversityFromMeanProbs(mean_probs);
  for (const auto& mp : mean_probs) out.perplexity += num::ExpEntropy(mp).value()[0];
  out.perplexity /= static_cast<double>(groups);
  out.total = spec.diversity_weight == 0
                  ? out.contrastive
                  : num::Add(out.contrastive,
                             num::Scale(out.diversity, static_cast<T>(spec.diversity_weight)));
  return out;
}

template <typename T>
FinetuneTerms<T> FinetuneLossGraph(const encoder::ModelSpec& model,
                                   const num::BoundParams<T>& params,
                                   const std::vector<const Example*>& batch, encoder::Mode mode,
                                   num::CounterRng& rng) {
  if (batch.empty()) throw TrainingError("fine-tune loss: empty batch");
  num::Graph<T>& g = GraphOf(params);
  FinetuneTerms<T> out;
  std::vector<Var<T>> weighted;
  for (std::size_t u = 0; u < batch.size(); ++u) {
    const Example& ex = *batch[u];
    Var<T> feats = ExtractFeatures(model, params, ex, g);
    num::CounterRng drop = rng.Split("dropout", u);
    const auto enc = encoder::EncodeGraph(model, params, feats, {}, mode, &drop);
    Var<T> logits = encoder::HeadGraph(model, params, enc.contexts);
    if (ex.labels.size() != logits.dim(0)) {
      throw TrainingError("utterance '" + ex.id + "': " + std::to_string(ex.labels.size()) +
                          " frame labels for " + std::to_string(logits.dim(0)) + " frames");
    }
    const auto& lv = logits.value();
    const std::size_t classes = lv.dim(1);
    for (std::size_t t = 0; t < ex.labels.size(); ++t) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (lv(t, c) > lv(t, best)) best = c;
      if (best == ex.labels[t]) ++out.correct;
    }
    weighted.push_back(
        num::Scale(FceLossGraph(logits, ex.labels), static_cast<T>(ex.labels.size())));
    out.frames += ex.labels.size();
  }
  Var<T> acc = weighted[0];
  for (std::size_t i = 1; i < weighted.size(); ++i) acc = num::Add(acc, weighted[i]);
  out.loss = num::Scale(acc, T(1) / static_cast<T>(out.frames));
  return out;
}

#define W2VS_INSTANTIATE(T)                                                                   \
  template Var<T> ContrastiveLogits(Var<T>, Var<T>, const std::vector<std::vector<std::size_t>>&, \
                                    double);                                                  \
  template Var<T> ContrastiveLossGraph(Var<T>, Var<T>, const std::vector<std::size_t>&,       \
                                       const PretrainLossSpec&, num::CounterRng&);            \
  template Var<T> DiversityFromMeanProbs(const std::vector<Var<T>>&);                         \
  template Var<T> FceLossGraph(Var<T>, const std::vector<std::size_t>&);                      \
  template PretrainTerms<T> PretrainLossGraph(const encoder::ModelSpec&,                      \
                                              const num::BoundParams<T>&,                     \
                                              const std::vector<const Example*>&,             \
                                              const PretrainLossSpec&, const PretrainOptions&, \
                                              num::CounterRng&);                              \
  template FinetuneTerms<T> FinetuneLossGraph(const encoder::ModelSpec&,                      \
                                              const num::BoundParams<T>&,                     \
                                              const std::vector<const Example*>&,             \
                                              encoder::Mode, num::CounterRng&);

W2VS_INSTANTIATE(float)
W2VS_INSTANTIATE(double)

#undef W2VS_INSTANTIATE

}  // namespace w2vs::losses
