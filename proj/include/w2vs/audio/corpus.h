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

// Synthetic tone-class corpora.
//
// An utterance is a run of segments; each segment is a sinusoid at its
// class frequency (optional per-segment detuning) plus white Gaussian noise.
// The oscillator phase is continuous across segments and starts at random.
// Class c of C sits at freq_lo * (freq_hi/freq_lo)^(c/(C-1)).
//
// With band_limit set, the waveform is synthesised at 16 kHz, low-passed
// below 4 kHz, and decimated when the corpus rate is 8 kHz.
//
// On disk: <dir>/manifest.jsonl plus <dir>/wav/<id>.wav and <id>.seg, where
// a .seg file holds one "start end class" line per segment.

#ifndef W2VS_AUDIO_CORPUS_H_
#define W2VS_AUDIO_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "w2vs/audio/audio_buffer.h"

namespace w2vs::audio {

struct DomainProfile {
  int num_classes = 8;
  double freq_lo_hz = 250.0;
  double freq_hi_hz = 3000.0;
  double amplitude = 0.5;
  double noise_level = 0.05;
  double freq_jitter = 0.0;  // relative detuning, uniform in [-j, j] per segment
  bool band_limit = false;
  double min_segment_s = 0.1;
  double max_segment_s = 0.4;
};

struct CorpusSpec {
  std::string name = "corpus";
  int num_utterances = 16;
  double min_duration_s = 1.0;
  double max_duration_s = 1.0;
  int sample_rate = kWidebandRate;
  DomainProfile profile;
  std::uint64_t seed = 0;
};

/// Shortest utterance accepted by ValidateCorpusSpec (the base receptive field).
inline constexpr double kMinUtteranceSeconds = 0.025;
/// Pass-band edge of the telephony band-limit filter.
inline constexpr double kBandLimitCutoffHz = 3600.0;

void ValidateCorpusSpec(const CorpusSpec& spec);

/// [start, end) in samples.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  int label = 0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct Utterance {
  std::string id;
  std::filesystem::path path;  // resolved against the manifest directory
  int sample_rate = kWidebandRate;
  std::size_t num_samples = 0;
  std::vector<Segment> segments;
};

double ClassFrequency(const DomainProfile& profile, int label);

/// Utterance `index` of the corpus, in memory.
std::pair<AudioBuffer, std::vector<Segment>> SynthesizeUtterance(const CorpusSpec& spec,
                                                                 int index);

/// Writes the corpus under `out_dir` and returns the manifest path.
std::filesystem::path SynthCorpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

std::vector<Utterance> LoadManifest(const std::filesystem::path& manifest);

/// Concatenation in argument order; used for joint ("+") training sets.
std::vector<Utterance> LoadManifests(const std::vector<std::filesystem::path>& manifests);

/// Loads the utterance audio and checks it against the manifest entry.
AudioBuffer LoadUtteranceAudio(const Utterance& utt);

/// Reads a .seg file.
std::vector<Segment> LoadSegments(const std::filesystem::path& path);

/// Throws unless the segments tile [0, num_samples) in order with labels in
/// [0, num_classes); num_classes <= 0 skips the label check.
void ValidateSegments(const std::vector<Segment>& segments, std::size_t num_samples,
                      int num_classes = 0);

}  // namespace w2vs::audio

#endif  // W2VS_AUDIO_CORPUS_H_
