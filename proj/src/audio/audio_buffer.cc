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


#include "w2vs/audio/audio_buffer.h"

#include <cmath>
#include <string>

#include "w2vs/common/error.h"

namespace w2vs::audio {

bool IsSupportedRate(int sample_rate) {
  return sample_rate == kTelephonyRate || sample_rate == kWidebandRate;
}

void ValidateAudio(const AudioBuffer& audio) {
  if (!IsSupportedRate(audio.sample_rate)) {
    throw Error("audio: unsupported sample rate " +
                std::to_string(audio.sample_rate) + " Hz (expected 8000 or 16000)");
  }
  if (audio.samples.empty()) throw Error("audio: no samples");
  for (std::size_t i = 0; i < audio.samples.size(); ++i) {
    const float v = audio.samples[i];
    if (!std::isfinite(v)) {
      throw NonFiniteError("audio: non-finite sample at index " + std::to_string(i));
    }
    if (v < -1.0f || v > 1.0f) {
      throw Error("audio: sample " + std::to_string(i) + " = " + std::to_string(v) +
                  " outside [-1, 1]");
    }
  }
}

}  // namespace w2vs::audio
