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


// ModelSpec <-> JSON, shared by checkpoint headers and run configs.
//
//   {"name": "toy",
//    "stack": {"sample_rate": 16000, "layers": [{"in_channels": 1, ...}, ...]},
//    "encoder": {"num_blocks": 4, ...}, "quantizer": {"groups": 2, ...},
//    "num_classes": 0}
//
// In configs "stack" may instead be {"base_channels": C} for the 7-layer
// 16 kHz stack, optionally with "bandwidth_plan" (e.g. "last") to derive
// the matching 8 kHz stack. Absent keys keep ToyModelSpec() defaults.

#ifndef W2VS_ENCODER_SPEC_JSON_H_
#define W2VS_ENCODER_SPEC_JSON_H_

#include <json.hpp>

#include "w2vs/common/json_reader.h"
#include "w2vs/encoder/model.h"

namespace w2vs::encoder {

nlohmann::json ModelSpecToJson(const ModelSpec& spec);

/// Strict: unknown keys and wrong types throw ConfigError. The result is
/// validated.
ModelSpec ModelSpecFromJson(JsonReader reader);

}  // namespace w2vs::encoder

#endif  // W2VS_ENCODER_SPEC_JSON_H_
