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


// Finite-difference checks of every differentiable operator and of the two
// training losses on a tiny model.

#ifndef W2VS_VERIFY_GRADIENTS_H_
#define W2VS_VERIFY_GRADIENTS_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "w2vs/encoder/model.h"
#include "w2vs/numerics/grad_check.h"

namespace w2vs::verify {

inline constexpr double kGradEpsilon = 1e-3;
inline constexpr double kGradTolerance = 1e-3;

struct OpGradCase {
  std::string name;
  std::vector<num::Shape> inputs;
  std::function<num::Var<double>(num::Graph<double>&, const std::vector<num::Var<double>>&)> op;
};

std::vector<OpGradCase> OperatorGradCases();

/// Inputs uniform in [-1, 1] and a random linear read-out of the output,
/// both drawn from `seed`.
num::GradCheckResult CheckOperatorGradient(const OpGradCase& c, std::uint64_t seed);

/// Three-layer extractor and a one-block, 8-dim encoder.
encoder::ModelSpec TinyModelSpec();

inline constexpr int kLossDirections = 4;

// The loss checks probe every parameter tensor along kLossDirections
// directions with num::DirectionalGradCheck.

/// Total pre-training loss (contrastive + diversity) of a randomly initialised
/// tiny model on one 4-frame utterance with every frame masked. Eval mode and
/// the soft Gumbel relaxation keep the loss a smooth function of the weights.
num::GradCheckResult CheckPretrainGradient(std::uint64_t seed);

/// Frame-wise cross entropy of the tiny model with a random 3-class head.
num::GradCheckResult CheckFceGradient(std::uint64_t seed);

}  // namespace w2vs::verify

#endif  // W2VS_VERIFY_GRADIENTS_H_
