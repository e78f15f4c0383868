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


// Frame-level class labels from segment alignments.

#ifndef W2VS_AUDIO_ALIGNMENT_H_
#define W2VS_AUDIO_ALIGNMENT_H_

#include <cstddef>
#include <vector>

#include "w2vs/audio/corpus.h"
#include "w2vs/features/conv_stack.h"

namespace w2vs::audio {

/// One label per output frame of `geometry`: the class of the segment that
/// contains FrameCenter(t). A center past the last segment takes the last
/// segment's class.
std::vector<int> FrameLabels(const std::vector<Segment>& segments, std::size_t num_samples,
                             const features::FrameGeometry& geometry);

inline std::vector<int> FrameLabels(const Utterance& utt,
                                    const features::FrameGeometry& geometry) {
  return FrameLabels(utt.segments, utt.num_samples, geometry);
}

}  // namespace w2vs::audio

#endif  // W2VS_AUDIO_ALIGNMENT_H_
