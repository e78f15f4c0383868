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


#include "w2vs/encoder/spec_json.h"

#include <string>

#include "w2vs/common/error.h"

namespace w2vs::encoder {

using nlohmann::json;

json ModelSpecToJson(const ModelSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.stack.layers) {
    layers.push_back({{"in_channels", l.in_channels},
                      {"out_channels", l.out_channels},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"stride_num", l.stride_num},
                      {"stride_den", l.stride_den},
                      {"dilation", l.dilation},
                      {"layer_norm", l.layer_norm}});
  }
  const EncoderSpec& e = spec.encoder;
  const QuantizerSpec& q = spec.quantizer;
  return {{"name", spec.name},
          {"stack", {{"sample_rate", spec.stack.sample_rate}, {"layers", layers}}},
          {"encoder",
           {{"num_blocks", e.num_blocks},
            {"dim", e.dim},
            {"heads", e.heads},
            {"ffn_dim", e.ffn_dim},
            {"dropout", e.dropout},
            {"pos_conv_kernel", e.pos_conv_kernel},
            {"pos_conv_groups", e.pos_conv_groups}}},
          {"quantizer",
           {{"groups", q.groups},
            {"entries", q.entries},
            {"code_dim", q.code_dim},
            {"temperature", q.temperature}}},
          {"num_classes", spec.num_classes}};
}

namespace {

features::ConvStackSpec StackFromJson(JsonReader r) {
  features::ConvStackSpec stack;
  if (r.Has("base_channels")) {
    int channels = 0;
    r.Require("base_channels", channels);
    if (channels < 1) throw ConfigError(r.PathOf("base_channels"), "positive integer", "must be >= 1");
    stack = features::BaseStack(channels);
    if (r.Has("bandwidth_plan")) {
      std::string plan;
      r.Get("bandwidth_plan", plan);
      features::StrideSurgeryPlan p;
      try {
        p = features::ParseSurgeryPlan(plan);
      } catch (const Error& e) {
        throw ConfigError(r.PathOf("bandwidth_plan"), "surgery plan", e.what());
      }
      // Placeholder weights; only the derived spec is kept.
      num::CounterRng rng(0, "spec");
      num::ParamStore params;
      features::InitStackParams(stack, rng, params);
      try {
        stack = features::AdaptBandwidth(stack, params, p).first;
      } catch (const Error& e) {
        throw ConfigError(r.PathOf("bandwidth_plan"), "surgery plan", e.what());
      }
    }
    if (r.Has("sample_rate")) {
      int rate = 0;
      r.Get("sample_rate", rate);
      if (rate != stack.sample_rate) {
        throw ConfigError(r.PathOf("sample_rate"), "integer",
                          "base stack runs at " + std::to_string(stack.sample_rate) +
                              " Hz; use bandwidth_plan to derive an 8000 Hz stack");
      }
    }
    r.Finish();
    return stack;
  }
  r.Require("sample_rate", stack.sample_rate);
  for (JsonReader l : r.Array("layers")) {
    features::ConvLayerSpec layer;
    l.Require("in_channels", layer.in_channels);
    l.Require("out_channels", layer.out_channels);
    l.Require("kernel", layer.kernel);
    l.Get("stride", layer.stride);
    l.Get("stride_num", layer.stride_num);
    l.Get("stride_den", layer.stride_den);
    l.Get("dilation", layer.dilation);
    l.Get("layer_norm", layer.layer_norm);
    l.Finish();
    stack.layers.push_back(layer);
  }
  r.Finish();
  return stack;
}

}  // namespace

ModelSpec ModelSpecFromJson(JsonReader r) {
  ModelSpec spec = ToyModelSpec();
  r.Get("name", spec.name);
  if (r.Has("stack")) spec.stack = StackFromJson(r.Object("stack"));
  if (r.Has("encoder")) {
    JsonReader e = r.Object("encoder");
    e.Get("num_blocks", spec.encoder.num_blocks);
    e.Get("dim", spec.encoder.dim);
    e.Get("heads", spec.encoder.heads);
    e.Get("ffn_dim", spec.encoder.ffn_dim);
    e.Get("dropout", spec.encoder.dropout);
    e.Get("pos_conv_kernel", spec.encoder.pos_conv_kernel);
    e.Get("pos_conv_groups", spec.encoder.pos_conv_groups);
    e.Finish();
  }
  if (r.Has("quantizer")) {
    JsonReader q = r.Object("quantizer");
    q.Get("groups", spec.quantizer.groups);
    q.Get("entries", spec.quantizer.entries);
    q.Get("code_dim", spec.quantizer.code_dim);
    q.Get("temperature", spec.quantizer.temperature);
    q.Finish();
  }
  r.Get("num_classes", spec.num_classes);
  r.Finish();
  try {
    ValidateModelSpec(spec);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(r.path(), "valid model spec", e.what());
  }
  return spec;
}

}  // namespace w2vs::encoder
