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

#ifndef W2VS_AUDIO_AUDIO_BUFFER_H_
#define W2VS_AUDIO_AUDIO_BUFFER_H_

#include <cstddef>
#include <vector>

namespace w2vs::audio {

inline constexpr int kTelephonyRate = 8000;
inline constexpr int kWidebandRate = 16000;

/// Mono audio. Invariants: sample_rate is 8000 or 16000; at least one sample;
/// every sample finite and within [-1, 1].
struct AudioBuffer {
  int sample_rate = kWidebandRate;
  std::vector<float> samples;

  std::size_t size() const { return samples.size(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Throws w2vs::Error describing the first violated invariant.
void ValidateAudio(const AudioBuffer& audio);

bool IsSupportedRate(int sample_rate);

}  // namespace w2vs::audio

#endif  // W2VS_AUDIO_AUDIO_BUFFER_H_
