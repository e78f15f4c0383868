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

// Convolutional feature extractor: layer specs, exact frame geometry,
// bandwidth surgery and the forward pass.
//
// Layers are numbered from 1. Layer i owns the parameters
// "feature_extractor.conv<i>.weight" [C_out x C_in x K] and, when it has a
// layer norm, "feature_extractor.conv<i>.ln.gain" / ".ln.bias" [C_out].

#ifndef W2VS_FEATURES_CONV_STACK_H_
#define W2VS_FEATURES_CONV_STACK_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "w2vs/audio/audio_buffer.h"
#include "w2vs/numerics/graph.h"
#include "w2vs/numerics/ops.h"
#include "w2vs/numerics/param_store.h"
#include "w2vs/numerics/rng.h"

namespace w2vs::features {

struct ConvLayerSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  // A fractional layer has stride_den > 0 and advances num/den samples per
  // frame; only 5/2 is supported and `stride` is then ignored.
  int stride_num = 0;
  int stride_den = 0;
  int dilation = 1;
  bool layer_norm = true;

  bool fractional() const { return stride_den > 0; }
  double effective_stride() const {
    return fractional() ? static_cast<double>(stride_num) / stride_den : stride;
  }
  std::size_t OutputLength(std::size_t length) const;
  /// Input index of output frame t's first tap.
  std::size_t Start(std::size_t t) const;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

struct ConvStackSpec {
  std::vector<ConvLayerSpec> layers;
  int sample_rate = audio::kWidebandRate;

  friend bool operator==(const ConvStackSpec&, const ConvStackSpec&) = default;
};

void ValidateStack(const ConvStackSpec& stack);

/// Strides (5,2,2,2,2,2,2), kernels (10,3,3,3,3,2,2), `channels` wide, layer
/// norm on every layer, 16 kHz.
ConvStackSpec BaseStack(int channels);

std::string WeightName(int layer);
std::string GainName(int layer);
std::string BiasName(int layer);

struct FrameGeometry {
  int sample_rate = 0;
  // Product of effective strides as an exact fraction, in input samples.
  std::int64_t shift_num = 1;
  std::int64_t shift_den = 1;
  double frame_shift_ms = 0;
  // Span of frame 0; every even-aligned frame has the same span.
  std::size_t receptive_field_samples = 0;
  double receptive_field_ms = 0;
  std::vector<ConvLayerSpec> layers;

  /// Composed per-layer lengths; throws InputTooShort.
  std::size_t OutputLength(std::size_t input_length) const;
  std::size_t FrameStart(std::size_t t) const;
  std::size_t FrameCenter(std::size_t t) const {
    return FrameStart(t) + receptive_field_samples / 2;
  }
};

FrameGeometry Geometry(const ConvStackSpec& stack);

// Bandwidth surgery ----------------------------------------------------------

struct StrideSurgeryPlan {
  enum class Target { kFirst, kLast, kIndex };
  enum class Method { kFractionalFirst, kHalveEven };
  Target target = Target::kLast;
  int index = 0;  // 1-based, for kIndex
  Method method = Method::kHalveEven;
  bool fold_kernel = false;
};

/// "first" | "first+fold" (fractional-first), "last" | "<i>" (halve-even).
StrideSurgeryPlan ParseSurgeryPlan(const std::string& text);
std::string FormatSurgeryPlan(const StrideSurgeryPlan& plan);

/// Turns a 16 kHz stack into an 8 kHz stack with the same frame shift. Only
/// feature-extractor tensors of `params` may change; the rest are copied.
std::pair<ConvStackSpec, num::ParamStore> AdaptBandwidth(const ConvStackSpec& stack,
                                                         const num::ParamStore& params,
                                                         const StrideSurgeryPlan& plan);

// Parameters and forward pass ------------------------------------------------

/// Kaiming-style normal kernels, unit gains, zero biases.
void InitStackParams(const ConvStackSpec& stack, num::CounterRng& rng, num::ParamStore& params);

/// Expected shapes of every feature-extractor tensor, by name.
std::vector<std::pair<std::string, num::Shape>> StackParamShapes(const ConvStackSpec& stack);

/// audio: [1 x L]. Returns [C x T]: per layer conv, then layer norm over
/// channels (if flagged), then GELU.
template <typename T>
num::Var<T> ExtractGraph(const ConvStackSpec& stack, const num::BoundParams<T>& params,
                         num::Var<T> audio) {
  num::Var<T> x = audio;
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const ConvLayerSpec& l = stack.layers[i];
    const int idx = static_cast<int>(i) + 1;
    const num::Var<T>& w = params.at(WeightName(idx));
    x = l.fractional()
            ? num::FractionalConv(x, w, static_cast<std::size_t>(l.stride_num),
                                  static_cast<std::size_t>(l.stride_den))
            : num::Conv1d(x, w, static_cast<std::size_t>(l.stride),
                          static_cast<std::size_t>(l.dilation));
    if (l.layer_norm) {
      x = num::Transpose(num::LayerNorm(num::Transpose(x), params.at(GainName(idx)),
                                        params.at(BiasName(idx))));
    }
    x = num::Gelu(x);
  }
  return x;
}

/// Rejects a sample-rate mismatch, naming both rates, before any compute.
void CheckRate(const ConvStackSpec& stack, int audio_rate);

/// Forward pass outside any training graph.
num::Tensor Extract(const ConvStackSpec& stack, const num::ParamStore& params,
                    const audio::AudioBuffer& audio);

}  // namespace w2vs::features

#endif  // W2VS_FEATURES_CONV_STACK_H_
