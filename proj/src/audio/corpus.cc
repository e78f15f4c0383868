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

#include "w2vs/audio/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "w2vs/audio/resample.h"
#include "w2vs/audio/wav.h"
#include "w2vs/common/error.h"
#include "w2vs/common/file_util.h"
#include "w2vs/numerics/rng.h"

namespace w2vs::audio {

namespace {

using nlohmann::json;

constexpr int kBandLimitTaps = 129;
constexpr double kBandLimitBeta = 8.0;

std::string UtteranceId(const CorpusSpec& spec, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  return spec.name + "-" + buf;
}

std::size_t Samples(double seconds, int rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

}  // namespace

void ValidateCorpusSpec(const CorpusSpec& spec) {
  const DomainProfile& p = spec.profile;
  auto fail = [](const std::string& what) { throw Error("corpus spec: " + what); };
  if (!IsSupportedRate(spec.sample_rate)) fail("sample_rate must be 8000 or 16000");
  if (spec.num_utterances < 1) fail("num_utterances must be >= 1");
  if (spec.min_duration_s < kMinUtteranceSeconds) {
    fail("min_duration_s must cover one receptive field (>= 0.025 s)");
  }
  if (spec.max_duration_s < spec.min_duration_s) fail("max_duration_s < min_duration_s");
  if (p.num_classes < 1) fail("num_classes must be >= 1");
  if (!(p.freq_lo_hz > 0) || p.freq_hi_hz < p.freq_lo_hz) {
    fail("need 0 < freq_lo_hz <= freq_hi_hz");
  }
  const double top = p.freq_hi_hz * (1.0 + p.freq_jitter);
  if (top >= spec.sample_rate / 2.0) fail("class band exceeds Nyquist");
  if (p.band_limit && top >= kBandLimitCutoffHz) {
    fail("band-limited profile needs class frequencies below 3600 Hz");
  }
  if (p.freq_jitter < 0 || p.freq_jitter >= 1) fail("freq_jitter must lie in [0, 1)");
  if (p.amplitude < 0 || p.amplitude > 1) fail("amplitude must lie in [0, 1]");
  if (p.noise_level < 0) fail("noise_level must be >= 0");
  if (!(p.min_segment_s > 0) || p.max_segment_s < p.min_segment_s) {
    fail("need 0 < min_segment_s <= max_segment_s");
  }
}

double ClassFrequency(const DomainProfile& profile, int label) {
  if (profile.num_classes == 1) return profile.freq_lo_hz;
  const double r = static_cast<double>(label) / (profile.num_classes - 1);
  return profile.freq_lo_hz * std::pow(profile.freq_hi_hz / profile.freq_lo_hz, r);
}

std::pair<AudioBuffer, std::vector<Segment>> SynthesizeUtterance(const CorpusSpec& spec,
                                                                 int index) {
  ValidateCorpusSpec(spec);
  const DomainProfile& p = spec.profile;
  num::CounterRng rng(spec.seed, "corpus", static_cast<std::uint64_t>(index));

  const double duration = rng.Uniform(spec.min_duration_s, spec.max_duration_s);
  const std::size_t n = std::max<std::size_t>(1, Samples(duration, spec.sample_rate));

  std::vector<Segment> segments;
  for (std::size_t start = 0; start < n;) {
    const double seg_s = rng.Uniform(p.min_segment_s, p.max_segment_s);
    const std::size_t len = std::max<std::size_t>(1, Samples(seg_s, spec.sample_rate));
    const std::size_t end = std::min(n, start + len);
    const int label = static_cast<int>(rng.Below(static_cast<std::uint64_t>(p.num_classes)));
    segments.push_back({start, end, label});
    start = end;
  }

  // Synthesis runs at 16 kHz whenever the band limit has to be applied.
  const int factor = p.band_limit && spec.sample_rate == kTelephonyRate ? 2 : 1;
  const int synth_rate = spec.sample_rate * factor;
  std::vector<float> wave(n * factor);
  // One oscillator per utterance; its phase runs on across segment changes.
  double phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  for (const Segment& seg : segments) {
    const double jitter = p.freq_jitter > 0 ? rng.Uniform(-p.freq_jitter, p.freq_jitter) : 0.0;
    const double freq = ClassFrequency(p, seg.label) * (1.0 + jitter);
    const double w = 2.0 * std::numbers::pi * freq / synth_rate;
    for (std::size_t i = seg.start * factor; i < seg.end * factor; ++i) {
      double v = p.amplitude * std::sin(phase);
      if (p.noise_level > 0) v += p.noise_level * rng.Normal();
      wave[i] = static_cast<float>(v);
      phase = std::fmod(phase + w, 2.0 * std::numbers::pi);
    }
  }

  if (p.band_limit) {
    const std::vector<double> h =
        KaiserLowpass(kBandLimitTaps, kBandLimitCutoffHz, synth_rate, kBandLimitBeta);
    const std::vector<double> y = FilterSame(wave, h);
    for (std::size_t i = 0; i < y.size(); ++i) wave[i] = static_cast<float>(y[i]);
  }

  AudioBuffer audio;
  audio.sample_rate = spec.sample_rate;
  audio.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    audio.samples[i] = std::clamp(wave[i * factor], -1.0f, 1.0f);
  }
  return {std::move(audio), std::move(segments)};
}

std::filesystem::path SynthCorpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
  ValidateCorpusSpec(spec);
  std::ostringstream manifest;
  for (int i = 0; i < spec.num_utterances; ++i) {
    auto [audio, segments] = SynthesizeUtterance(spec, i);
    const std::string id = UtteranceId(spec, i);
    const std::string rel = "wav/" + id + ".wav";
    SaveWav(audio, out_dir / rel);

    std::ostringstream seg_text;
    json segs = json::array();
    for (const Segment& s : segments) {
      seg_text << s.start << ' ' << s.end << ' ' << s.label << '\n';
      segs.push_back({{"start", s.start}, {"end", s.end}, {"class", s.label}});
    }
    WriteFileAtomic(out_dir / ("wav/" + id + ".seg"), seg_text.str());

    json entry = {{"id", id},
                  {"path", rel},
                  {"sample_rate", audio.sample_rate},
                  {"num_samples", audio.size()},
                  {"duration", audio.duration_seconds()},
                  {"segments", segs}};
    manifest << entry.dump() << '\n';
  }
  const auto path = out_dir / "manifest.jsonl";
  WriteFileAtomic(path, manifest.str());
  return path;
}

std::vector<Utterance> LoadManifest(const std::filesystem::path& manifest) {
  const std::string text = ReadFile(manifest);
  const auto base = manifest.parent_path();
  std::vector<Utterance> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      Utterance u;
      u.id = j.at("id").get<std::string>();
      u.path = base / j.at("path").get<std::string>();
      u.sample_rate = j.at("sample_rate").get<int>();
      u.num_samples = j.at("num_samples").get<std::size_t>();
      for (const json& s : j.at("segments")) {
        u.segments.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(),
                              s.at("class").get<int>()});
      }
      if (!IsSupportedRate(u.sample_rate)) throw Error("unsupported sample_rate");
      ValidateSegments(u.segments, u.num_samples);
      out.push_back(std::move(u));
    } catch (const json::exception& e) {
      throw IoError(where + ": bad manifest entry: " + e.what());
    } catch (const Error& e) {
      throw IoError(where + ": " + e.what());
    }
  }
  if (out.empty()) throw IoError(manifest.string() + ": manifest lists no utterances");
  return out;
}

std::vector<Utterance> LoadManifests(const std::vector<std::filesystem::path>& manifests) {
  std::vector<Utterance> out;
  for (const auto& m : manifests) {
    auto part = LoadManifest(m);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

AudioBuffer LoadUtteranceAudio(const Utterance& utt) {
  AudioBuffer audio = LoadWav(utt.path);
  if (audio.sample_rate != utt.sample_rate || audio.size() != utt.num_samples) {
    throw IoError(utt.path.string() + ": audio (" + std::to_string(audio.sample_rate) + " Hz, " +
                  std::to_string(audio.size()) + " samples) disagrees with manifest (" +
                  std::to_string(utt.sample_rate) + " Hz, " + std::to_string(utt.num_samples) +
                  " samples)");
  }
  return audio;
}

std::vector<Segment> LoadSegments(const std::filesystem::path& path) {
  std::istringstream in(ReadFile(path));
  std::vector<Segment> out;
  Segment s;
  while (in >> s.start >> s.end >> s.label) out.push_back(s);
  if (!in.eof()) throw IoError(path.string() + ": malformed segment line");
  return out;
}

void ValidateSegments(const std::vector<Segment>& segments, std::size_t num_samples,
                      int num_classes) {
  if (segments.empty()) throw Error("segments: empty list");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    if (s.start != pos || s.end <= s.start) {
      throw Error("segments: entry " + std::to_string(i) + " does not continue the tiling at " +
                  std::to_string(pos));
    }
    if (s.label < 0 || (num_classes > 0 && s.label >= num_classes)) {
      throw Error("segments: class " + std::to_string(s.label) + " out of range");
    }
    pos = s.end;
  }
  if (pos != num_samples) {
    throw Error("segments: tiling ends at " + std::to_string(pos) + ", utterance has " +
                std::to_string(num_samples) + " samples");
  }
}

}  // namespace w2vs::audio
