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


// Built-in property suites run by `w2vs verify` and the acceptance binary.

#ifndef W2VS_VERIFY_SUITE_H_
#define W2VS_VERIFY_SUITE_H_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace w2vs::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

/// Base stack frame shift and receptive field; 20 ms at 8 kHz after every
/// bandwidth surgery.
CheckResult VerifyGeometry();

/// Fractional conv against nearest upsampling + dilated conv (bit-identical
/// on the common prefix) and the folded-kernel identity at even outputs.
CheckResult VerifyConvEquivalence(int pairs = 100, std::uint64_t seed = 1);

/// Central differences for every operator and both training losses.
CheckResult VerifyGradients(int points = 10);

/// Contrastive, diversity and fCE values at their closed-form points.
CheckResult VerifyClosedFormLosses();

/// Truncated 4-block toy encoder against the full model's intermediates.
CheckResult VerifyTruncation();

/// Every freeze descriptor and a two-phase schedule on a small model: frozen
/// tensors bit-identical after `steps` steps and reported unchanged by diff,
/// while the training-set loss decreases.
CheckResult VerifyFreezing(int steps = 100);

/// Round trip bit-exactness and detection of single-byte corruption.
CheckResult VerifyContainer();

/// Suite names accepted by RunSuite, in run order.
std::vector<std::string> SuiteNames();
CheckResult RunSuite(const std::string& name);

nlohmann::json ReportJson(const std::vector<CheckResult>& results);

}  // namespace w2vs::verify

#endif  // W2VS_VERIFY_SUITE_H_
