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

#include "w2vs/features/conv_stack.h"

#include <cmath>
#include <numeric>
#include <string>

#include "w2vs/common/error.h"
#include "w2vs/numerics/conv.h"

namespace w2vs::features {

namespace {

std::string LayerLabel(std::size_t i) { return "layer " + std::to_string(i + 1); }

}  // namespace

std::size_t ConvLayerSpec::OutputLength(std::size_t length) const {
  if (fractional()) {
    return num::FractionalOutputLength(length, static_cast<std::size_t>(kernel),
                                       static_cast<std::size_t>(stride_num),
                                       static_cast<std::size_t>(stride_den));
  }
  return num::Conv1dOutputLength(length, static_cast<std::size_t>(kernel),
                                 static_cast<std::size_t>(stride),
                                 static_cast<std::size_t>(dilation));
}

std::size_t ConvLayerSpec::Start(std::size_t t) const {
  if (fractional()) {
    return num::FractionalStart(t, static_cast<std::size_t>(stride_num),
                                static_cast<std::size_t>(stride_den));
  }
  return t * static_cast<std::size_t>(stride);
}

void ValidateStack(const ConvStackSpec& stack) {
  if (!audio::IsSupportedRate(stack.sample_rate)) {
    throw Error("conv stack: sample_rate must be 8000 or 16000, got " +
                std::to_string(stack.sample_rate));
  }
  if (stack.layers.empty()) throw Error("conv stack: no layers");
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const ConvLayerSpec& l = stack.layers[i];
    const std::string at = "conv stack " + LayerLabel(i) + ": ";
    if (l.kernel < 1 || l.dilation < 1 || l.in_channels < 1 || l.out_channels < 1) {
      throw Error(at + "kernel, dilation and channels must be positive");
    }
    if (l.fractional()) {
      if (i != 0) throw Error(at + "a fractional stride is only allowed on layer 1");
      if (l.stride_num != 5 || l.stride_den != 2) {
        throw Error(at + "only the fractional stride 5/2 is supported");
      }
      if (l.dilation != 1) throw Error(at + "fractional layers use unit-spaced taps");
    } else if (l.stride < 1) {
      throw Error(at + "stride must be positive");
    }
    const int expected_in = i == 0 ? 1 : stack.layers[i - 1].out_channels;
    if (l.in_channels != expected_in) {
      throw Error(at + "in_channels " + std::to_string(l.in_channels) + " does not chain (expected " +
                  std::to_string(expected_in) + ")");
    }
  }
}

ConvStackSpec BaseStack(int channels) {
  ConvStackSpec s;
  s.sample_rate = audio::kWidebandRate;
  const int kernels[] = {10, 3, 3, 3, 3, 2, 2};
  const int strides[] = {5, 2, 2, 2, 2, 2, 2};
  for (int i = 0; i < 7; ++i) {
    ConvLayerSpec l;
    l.in_channels = i == 0 ? 1 : channels;
    l.out_channels = channels;
    l.kernel = kernels[i];
    l.stride = strides[i];
    s.layers.push_back(l);
  }
  return s;
}

std::string WeightName(int layer) {
  return "feature_extractor.conv" + std::to_string(layer) + ".weight";
}
std::string GainName(int layer) {
  return "feature_extractor.conv" + std::to_string(layer) + ".ln.gain";
}
std::string BiasName(int layer) {
  return "feature_extractor.conv" + std::to_string(layer) + ".ln.bias";
}

std::size_t FrameGeometry::OutputLength(std::size_t input_length) const {
  std::size_t len = input_length;
  for (const ConvLayerSpec& l : layers) len = l.OutputLength(len);
  return len;
}

std::size_t FrameGeometry::FrameStart(std::size_t t) const {
  std::size_t pos = t;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) pos = it->Start(pos);
  return pos;
}

FrameGeometry Geometry(const ConvStackSpec& stack) {
  ValidateStack(stack);
  FrameGeometry g;
  g.sample_rate = stack.sample_rate;
  g.layers = stack.layers;
  for (const ConvLayerSpec& l : stack.layers) {
    g.shift_num *= l.fractional() ? l.stride_num : l.stride;
    g.shift_den *= l.fractional() ? l.stride_den : 1;
  }
  const std::int64_t div = std::gcd(g.shift_num, g.shift_den);
  g.shift_num /= div;
  g.shift_den /= div;
  g.frame_shift_ms = static_cast<double>(g.shift_num * 1000) /
                     static_cast<double>(g.shift_den * stack.sample_rate);

  // Last input index touched by frame 0, walking back from the top layer.
  std::size_t last = 0;
  for (auto it = stack.layers.rbegin(); it != stack.layers.rend(); ++it) {
    last = it->Start(last) + static_cast<std::size_t>(it->dilation * (it->kernel - 1));
  }
  g.receptive_field_samples = last + 1;
  g.receptive_field_ms =
      static_cast<double>(g.receptive_field_samples * 1000) / stack.sample_rate;
  return g;
}

// ---------------------------------------------------------------------------

StrideSurgeryPlan ParseSurgeryPlan(const std::string& text) {
  StrideSurgeryPlan p;
  if (text == "first" || text == "first+fold") {
    p.target = StrideSurgeryPlan::Target::kFirst;
    p.method = StrideSurgeryPlan::Method::kFractionalFirst;
    p.fold_kernel = text == "first+fold";
    return p;
  }
  if (text == "last") {
    p.target = StrideSurgeryPlan::Target::kLast;
    p.method = StrideSurgeryPlan::Method::kHalveEven;
    return p;
  }
  std::size_t used = 0;
  int index = 0;
  try {
    index = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || index < 1) {
    throw Error("bad bandwidth plan '" + text +
                "' (expected first, first+fold, last or a 1-based layer index)");
  }
  p.target = StrideSurgeryPlan::Target::kIndex;
  p.index = index;
  p.method = StrideSurgeryPlan::Method::kHalveEven;
  return p;
}

std::string FormatSurgeryPlan(const StrideSurgeryPlan& plan) {
  std::string target;
  switch (plan.target) {
    case StrideSurgeryPlan::Target::kFirst: target = "first"; break;
    case StrideSurgeryPlan::Target::kLast: target = "last"; break;
    case StrideSurgeryPlan::Target::kIndex: target = std::to_string(plan.index); break;
  }
  if (plan.method == StrideSurgeryPlan::Method::kFractionalFirst) {
    return plan.fold_kernel ? target + "+fold" : target;
  }
  return target;
}

std::pair<ConvStackSpec, num::ParamStore> AdaptBandwidth(const ConvStackSpec& stack,
                                                         const num::ParamStore& params,
                                                         const StrideSurgeryPlan& plan) {
  ValidateStack(stack);
  if (stack.sample_rate != audio::kWidebandRate) {
    throw SurgeryError("adapt_bandwidth: stack sample_rate is already " +
                       std::to_string(stack.sample_rate) + " Hz; surgery applies to 16000 Hz stacks");
  }
  const std::size_t n = stack.layers.size();
  std::size_t target = 0;
  switch (plan.target) {
    case StrideSurgeryPlan::Target::kFirst: target = 0; break;
    case StrideSurgeryPlan::Target::kLast: target = n - 1; break;
    case StrideSurgeryPlan::Target::kIndex:
      if (plan.index < 1 || static_cast<std::size_t>(plan.index) > n) {
        throw SurgeryError("adapt_bandwidth: layer index " + std::to_string(plan.index) +
                           " outside 1.." + std::to_string(n));
      }
      target = static_cast<std::size_t>(plan.index - 1);
      break;
  }

  ConvStackSpec out = stack;
  num::ParamStore new_params = params;
  ConvLayerSpec& layer = out.layers[target];
  const std::string where = "adapt_bandwidth on " + LayerLabel(target) + ": ";

  if (plan.method == StrideSurgeryPlan::Method::kHalveEven) {
    if (plan.fold_kernel) throw SurgeryError(where + "fold_kernel requires fractional-first");
    if (layer.fractional() || layer.stride % 2 != 0) {
      throw SurgeryError(where + "stride " + std::to_string(layer.stride) +
                         " is odd and cannot be halved; use the fractional-first method");
    }
    layer.stride /= 2;
  } else {
    if (target != 0) throw SurgeryError(where + "fractional-first applies to layer 1 only");
    if (layer.fractional() || layer.stride != 5 || layer.dilation != 1) {
      throw SurgeryError(where + "fractional-first needs an integer stride of 5 and dilation 1");
    }
    layer.stride = 1;
    layer.stride_num = 5;
    layer.stride_den = 2;
    if (plan.fold_kernel) {
      const std::string name = WeightName(1);
      auto it = params.find(name);
      if (it == params.end()) throw SurgeryError(where + "missing tensor " + name);
      if (layer.kernel % 2 != 0) {
        throw SurgeryError(where + "kernel length " + std::to_string(layer.kernel) +
                           " is odd and cannot be folded");
      }
      new_params[name] = num::FoldKernel(it->second);
      layer.kernel /= 2;
    }
  }
  out.sample_rate = audio::kTelephonyRate;
  ValidateStack(out);
  return {std::move(out), std::move(new_params)};
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, num::Shape>> StackParamShapes(const ConvStackSpec& stack) {
  std::vector<std::pair<std::string, num::Shape>> out;
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const ConvLayerSpec& l = stack.layers[i];
    const int idx = static_cast<int>(i) + 1;
    const auto co = static_cast<std::size_t>(l.out_channels);
    out.emplace_back(WeightName(idx), num::Shape{co, static_cast<std::size_t>(l.in_channels),
                                                 static_cast<std::size_t>(l.kernel)});
    if (l.layer_norm) {
      out.emplace_back(GainName(idx), num::Shape{co});
      out.emplace_back(BiasName(idx), num::Shape{co});
    }
  }
  return out;
}

void InitStackParams(const ConvStackSpec& stack, num::CounterRng& rng, num::ParamStore& params) {
  ValidateStack(stack);
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const ConvLayerSpec& l = stack.layers[i];
    const int idx = static_cast<int>(i) + 1;
    num::Tensor w(num::Shape{static_cast<std::size_t>(l.out_channels),
                             static_cast<std::size_t>(l.in_channels),
                             static_cast<std::size_t>(l.kernel)});
    num::CounterRng r = rng.Split(WeightName(idx));
    const double std_dev = std::sqrt(2.0 / (l.in_channels * l.kernel));
    for (float& v : w.data()) v = static_cast<float>(std_dev * r.Normal());
    params[WeightName(idx)] = std::move(w);
    if (l.layer_norm) {
      params[GainName(idx)] = num::Tensor(num::Shape{static_cast<std::size_t>(l.out_channels)}, 1.0f);
      params[BiasName(idx)] = num::Tensor(num::Shape{static_cast<std::size_t>(l.out_channels)});
    }
  }
}

void CheckRate(const ConvStackSpec& stack, int audio_rate) {
  if (audio_rate != stack.sample_rate) {
    throw Error("sample rate mismatch: audio is " + std::to_string(audio_rate) +
                " Hz but the feature extractor expects " + std::to_string(stack.sample_rate) +
                " Hz; resample the data or adapt the extractor");
  }
}

num::Tensor Extract(const ConvStackSpec& stack, const num::ParamStore& params,
                    const audio::AudioBuffer& audio) {
  ValidateStack(stack);
  CheckRate(stack, audio.sample_rate);
  num::Graph<float> g;
  const auto bound = num::Bind<float>(g, params, [](const std::string&) { return false; });
  num::Var<float> x = g.Constant(num::Tensor(num::Shape{1, audio.size()}, audio.samples));
  return ExtractGraph(stack, bound, x).value();
}

}  // namespace w2vs::features
