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


// Pre-training objective (contrastive + codebook diversity) and frame-wise
// cross entropy for fine-tuning.

#ifndef W2VS_LOSSES_LOSSES_H_
#define W2VS_LOSSES_LOSSES_H_

#include <cstddef>
#include <string>
#include <vector>

#include "w2vs/audio/audio_buffer.h"
#include "w2vs/encoder/model.h"
#include "w2vs/numerics/graph.h"
#include "w2vs/numerics/param_store.h"
#include "w2vs/numerics/rng.h"
#include "w2vs/numerics/tensor.h"

namespace w2vs::losses {

struct PretrainLossSpec {
  int num_distractors = 10;   // K
  double temperature = 0.1;   // kappa
  double diversity_weight = 0.1;  // alpha
};

void ValidatePretrainLossSpec(const PretrainLossSpec& spec);

/// For each of `num_masked` masked positions, K distinct other positions,
/// drawn uniformly without replacement.
std::vector<std::vector<std::size_t>> SampleDistractors(std::size_t num_masked, int k,
                                                        num::CounterRng& rng);

/// cos(c_m, candidate)/kappa for candidates {q_m} followed by the distractors;
/// [M x (K+1)]. `contexts` and `targets` hold the masked frames only.
template <typename T>
num::Var<T> ContrastiveLogits(num::Var<T> contexts, num::Var<T> targets,
                              const std::vector<std::vector<std::size_t>>& distractors,
                              double temperature);

/// contexts, targets: [T x D] over the whole utterance. Errors when fewer than
/// K+1 frames are masked.
template <typename T>
num::Var<T> ContrastiveLossGraph(num::Var<T> contexts, num::Var<T> targets,
                                 const std::vector<std::size_t>& mask,
                                 const PretrainLossSpec& spec, num::CounterRng& rng);

/// (G*V - sum_g exp(H(mean_probs[g]))) / (G*V); each mean_probs[g] is [V].
template <typename T>
num::Var<T> DiversityFromMeanProbs(const std::vector<num::Var<T>>& mean_probs);

template <typename T>
num::Var<T> FceLossGraph(num::Var<T> logits, const std::vector<std::size_t>& labels);

// Value-level forms.
double ContrastiveLoss(const num::Tensor& contexts, const num::Tensor& targets,
                       const std::vector<std::size_t>& mask, const PretrainLossSpec& spec,
                       num::CounterRng& rng);
/// probs: [T x G x V], normalised per (frame, group) to within 1e-4.
double DiversityLoss(const num::Tensor& probs);
/// sum_g exp(H(mean over frames of probs[:, g, :])) / G.
double CodebookPerplexity(const num::Tensor& probs);
double FceLoss(const num::Tensor& logits, const std::vector<std::size_t>& labels);

// ---------------------------------------------------------------------------
// Batched losses over whole utterances.

struct Example {
  std::string id;
  audio::AudioBuffer audio;
  std::vector<std::size_t> labels;  // one class per frame; empty if unlabelled
};

template <typename T>
struct PretrainTerms {
  num::Var<T> total;
  num::Var<T> contrastive;
  num::Var<T> diversity;
  double perplexity = 0;
  std::size_t masked_frames = 0;
  std::size_t frames = 0;
};

struct PretrainOptions {
  encoder::MaskSpec mask;
  encoder::Mode mode = encoder::Mode::kTrain;
  encoder::QuantizerMode quantizer = encoder::QuantizerMode::kHard;
  int mask_attempts = 8;  // redraws when a mask has fewer than K+1 frames
};

/// Contrastive term averaged over every masked frame of the batch; diversity
/// over the code distribution averaged over the same frames.
template <typename T>
PretrainTerms<T> PretrainLossGraph(const encoder::ModelSpec& model,
                                   const num::BoundParams<T>& params,
                                   const std::vector<const Example*>& batch,
                                   const PretrainLossSpec& spec, const PretrainOptions& options,
                                   num::CounterRng& rng);

template <typename T>
struct FinetuneTerms {
  num::Var<T> loss;
  std::size_t frames = 0;
  std::size_t correct = 0;  // argmax == label
};

/// Frame-weighted mean cross entropy of the output head over the batch.
template <typename T>
FinetuneTerms<T> FinetuneLossGraph(const encoder::ModelSpec& model,
                                   const num::BoundParams<T>& params,
                                   const std::vector<const Example*>& batch, encoder::Mode mode,
                                   num::CounterRng& rng);

}  // namespace w2vs::losses

#endif  // W2VS_LOSSES_LOSSES_H_
