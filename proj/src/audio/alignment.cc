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


#include "w2vs/audio/alignment.h"

#include "w2vs/common/error.h"

namespace w2vs::audio {

std::vector<int> FrameLabels(const std::vector<Segment>& segments, std::size_t num_samples,
                             const features::FrameGeometry& geometry) {
  ValidateSegments(segments, num_samples);
  const std::size_t frames = geometry.OutputLength(num_samples);
  std::vector<int> labels(frames);
  std::size_t seg = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t center = geometry.FrameCenter(t);
    while (seg + 1 < segments.size() && center >= segments[seg].end) ++seg;
    labels[t] = segments[seg].label;
  }
  return labels;
}

}  // namespace w2vs::audio
