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

// Context network, quantizer, masking and output head.
//
// Forward pass over extractor features F [C x T]:
//
//   z   = LayerNorm(F^T)                        feature_norm      [T x C]
//   x   = z W_p^T + b_p                         post_extract_proj [T x d]
//   x[m] = mask_embedding for masked frames m
//   x   = x + GELU(grouped_conv(x))             pos_conv
//   x   = x + Attn(LN(x)); x = x + FFN(LN(x))   encoder.block<i>, i = 1..N
//
// There is no final layer norm, so the output after block N is exactly what
// the first N blocks of a deeper model produce. The quantizer reads z; the
// contrastive loss compares final_proj(x) with the quantized targets.

#ifndef W2VS_ENCODER_MODEL_H_
#define W2VS_ENCODER_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "w2vs/features/conv_stack.h"
#include "w2vs/numerics/graph.h"
#include "w2vs/numerics/param_store.h"
#include "w2vs/numerics/rng.h"

namespace w2vs::encoder {

struct EncoderSpec {
  int num_blocks = 4;
  int dim = 64;
  int heads = 4;
  int ffn_dim = 256;
  double dropout = 0.1;
  int pos_conv_kernel = 9;
  int pos_conv_groups = 4;

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

struct QuantizerSpec {
  int groups = 2;
  int entries = 32;
  int code_dim = 64;
  double temperature = 2.0;

  friend bool operator==(const QuantizerSpec&, const QuantizerSpec&) = default;
};

struct MaskSpec {
  double start_prob = 0.065;
  int span = 10;
};

struct ModelSpec {
  std::string name = "toy";
  features::ConvStackSpec stack;
  EncoderSpec encoder;
  QuantizerSpec quantizer;
  int num_classes = 0;  // 0: no output head (pre-training configuration)

  bool has_head() const { return num_classes > 0; }
  int feature_dim() const { return stack.layers.back().out_channels; }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

void ValidateModelSpec(const ModelSpec& spec);

/// Base 16 kHz stack with `conv_channels` channels and toy encoder defaults.
ModelSpec ToyModelSpec(int conv_channels = 32);

struct Model {
  ModelSpec spec;
  num::ParamStore params;
};

/// Every tensor the spec implies, in name order.
std::vector<std::pair<std::string, num::Shape>> ParamShapes(const ModelSpec& spec);

/// Throws CheckpointError unless `params` holds exactly the tensors of
/// ParamShapes(spec) with matching shapes.
void CheckParams(const ModelSpec& spec, const num::ParamStore& params);

Model InitModel(const ModelSpec& spec, std::uint64_t seed);

// Parameter naming.
std::string BlockPrefix(int block);  // "encoder.block<i>."
/// 1-based block index of a block tensor, 0 for anything else.
int BlockIndexOf(const std::string& name);
/// One of feature_extractor, frontend, positional_conv, block<i>, quantizer,
/// final_proj, head.
std::string ComponentOf(const std::string& name);
bool IsFeatureExtractor(const std::string& name);
bool IsHead(const std::string& name);

enum class Mode { kTrain, kEval };
enum class QuantizerMode { kHard, kSoft, kArgmax };

template <typename T>
struct EncodeResult {
  num::Var<T> normed_features;             // z, [T x C]
  num::Var<T> projected;                   // after mask substitution, [T x d]
  num::Var<T> block_input;                 // after masking and pos_conv
  std::vector<num::Var<T>> block_outputs;  // after each block
  num::Var<T> contexts;                    // after the last block
};

/// `rng` drives dropout in train mode and may be null in eval mode.
template <typename T>
EncodeResult<T> EncodeGraph(const ModelSpec& spec, const num::BoundParams<T>& params,
                            num::Var<T> features, const std::vector<std::size_t>& mask, Mode mode,
                            num::CounterRng* rng);

template <typename T>
struct QuantizeResult {
  num::Var<T> targets;                 // [T x code_dim]
  std::vector<num::Var<T>> soft_probs;  // per group, softmax(logits) [T x V]
  std::vector<std::vector<int>> codes;  // [T][G] selected entries
};

/// kHard: straight-through Gumbel; kSoft: Gumbel-softmax without the
/// one-hot; kArgmax: deterministic selection. `rng` is unused for kArgmax.
template <typename T>
QuantizeResult<T> QuantizeGraph(const ModelSpec& spec, const num::BoundParams<T>& params,
                                num::Var<T> normed_features, QuantizerMode mode,
                                num::CounterRng* rng);

template <typename T>
num::Var<T> FinalProjGraph(const num::BoundParams<T>& params, num::Var<T> contexts);

template <typename T>
num::Var<T> HeadGraph(const ModelSpec& spec, const num::BoundParams<T>& params,
                      num::Var<T> contexts);

// Value-level conveniences; every parameter is treated as a constant.

/// Contexts [T x d] for extractor features [C x T].
num::Tensor Encode(const Model& model, const num::Tensor& features,
                   const std::vector<std::size_t>& mask, Mode mode, std::uint64_t seed = 0);

/// Hidden state after every block (index 0 = block input).
std::vector<num::Tensor> EncodeAllLayers(const Model& model, const num::Tensor& features);

struct Quantized {
  num::Tensor targets;                  // [T x code_dim]
  num::Tensor probs;                    // [T x G x V]
  std::vector<std::vector<int>> codes;  // [T][G]
};
Quantized Quantize(const Model& model, const num::Tensor& normed_features, Mode mode,
                   std::uint64_t seed = 0);

num::Tensor OutputHead(const Model& model, const num::Tensor& contexts);

/// Frames to mask: each of the T frames starts a span of `span` frames with
/// probability start_prob; spans are clipped at T and overlaps merge.
/// Sorted, without duplicates.
std::vector<std::size_t> SampleMask(const MaskSpec& spec, std::size_t num_frames,
                                    num::CounterRng& rng);

// Surgery on models (inputs are never modified).

/// Keeps blocks 1..n. The model name gets the suffix " 1-n".
Model Truncate(const Model& model, int n);
/// Adds a zero-initialised output head over `num_classes` classes.
Model AttachHead(const Model& model, int num_classes);
Model DetachHead(const Model& model);

}  // namespace w2vs::encoder

#endif  // W2VS_ENCODER_MODEL_H_
