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

#include "w2vs/audio/resample.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "w2vs/common/error.h"

namespace w2vs::audio {

namespace {

float Clamp1(double v) { return static_cast<float>(std::clamp(v, -1.0, 1.0)); }

}  // namespace

ResampleMethod ParseResampleMethod(std::string_view name) {
  if (name == "nearest") return ResampleMethod::kNearest;
  if (name == "linear") return ResampleMethod::kLinear;
  if (name == "sinc") return ResampleMethod::kSinc;
  throw Error("unknown resample method '" + std::string(name) +
              "' (expected nearest, linear or sinc)");
}

std::string ResampleMethodName(ResampleMethod method) {
  switch (method) {
    case ResampleMethod::kNearest: return "nearest";
    case ResampleMethod::kLinear: return "linear";
    case ResampleMethod::kSinc: return "sinc";
  }
  return "?";
}

std::vector<float> NnUpsampleX2(std::span<const float> in) {
  std::vector<float> out(in.size() * 2);
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = in[n / 2];
  return out;
}

std::vector<double> KaiserLowpass(int taps, double cutoff_hz, double rate_hz, double beta) {
  if (taps < 1 || taps % 2 == 0) throw Error("KaiserLowpass: taps must be odd");
  if (cutoff_hz <= 0 || cutoff_hz >= rate_hz / 2) {
    throw Error("KaiserLowpass: cutoff must lie in (0, rate/2)");
  }
  const double fc = cutoff_hz / rate_hz;
  const int mid = taps / 2;
  const double norm = std::cyl_bessel_i(0.0, beta);
  std::vector<double> h(static_cast<std::size_t>(taps));
  double sum = 0;
  for (int n = 0; n < taps; ++n) {
    const double m = n - mid;
    const double arg = 2.0 * fc * m;
    const double sinc = m == 0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    const double r = mid == 0 ? 0.0 : m / mid;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) / norm;
    h[static_cast<std::size_t>(n)] = 2.0 * fc * sinc * w;
    sum += h[static_cast<std::size_t>(n)];
  }
  for (double& v : h) v /= sum;
  return h;
}

std::vector<double> FilterSame(std::span<const float> x, std::span<const double> h) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto taps = static_cast<std::ptrdiff_t>(h.size());
  const std::ptrdiff_t mid = taps / 2;
  std::vector<double> out(x.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0;
    for (std::ptrdiff_t j = 0; j < taps; ++j) {
      const std::ptrdiff_t k = i + j - mid;
      if (k >= 0 && k < n) acc += h[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(k)];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

AudioBuffer Resample(const AudioBuffer& audio, int target_rate, ResampleMethod method) {
  ValidateAudio(audio);
  const int source_rate = audio.sample_rate;
  const bool up = target_rate == 2 * source_rate;
  const bool down = 2 * target_rate == source_rate;
  if ((!up && !down) || !IsSupportedRate(target_rate)) {
    throw Error("resample: unsupported ratio " + std::to_string(source_rate) + " Hz -> " +
                std::to_string(target_rate) + " Hz (only factors 2 and 1/2)");
  }
  const std::vector<float>& x = audio.samples;
  const std::size_t n = x.size();
  AudioBuffer out;
  out.sample_rate = target_rate;

  if (up) {
    switch (method) {
      case ResampleMethod::kNearest:
        out.samples = NnUpsampleX2(x);
        break;
      case ResampleMethod::kLinear:
        out.samples.resize(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
          out.samples[2 * i] = x[i];
          const float next = i + 1 < n ? x[i + 1] : x[i];
          out.samples[2 * i + 1] = 0.5f * x[i] + 0.5f * next;
        }
        break;
      case ResampleMethod::kSinc: {
        std::vector<float> stuffed(2 * n, 0.0f);
        for (std::size_t i = 0; i < n; ++i) stuffed[2 * i] = x[i];
        const double cutoff = kSincCutoffFraction * std::min(source_rate, target_rate);
        std::vector<double> h = KaiserLowpass(kSincTaps, cutoff, target_rate, kSincKaiserBeta);
        for (double& v : h) v *= 2.0;  // compensates the inserted zeros
        const std::vector<double> y = FilterSame(stuffed, h);
        out.samples.resize(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) out.samples[i] = Clamp1(y[i]);
        break;
      }
    }
    return out;
  }

  const std::size_t m = (n + 1) / 2;
  out.samples.resize(m);
  if (method == ResampleMethod::kSinc) {
    const double cutoff = kSincCutoffFraction * std::min(source_rate, target_rate);
    const std::vector<double> h = KaiserLowpass(kSincTaps, cutoff, source_rate, kSincKaiserBeta);
    const std::vector<double> y = FilterSame(x, h);
    for (std::size_t i = 0; i < m; ++i) out.samples[i] = Clamp1(y[2 * i]);
  } else {
    // Both interpolators evaluate the source exactly at even sample times.
    for (std::size_t i = 0; i < m; ++i) out.samples[i] = x[2 * i];
  }
  return out;
}

}  // namespace w2vs::audio
