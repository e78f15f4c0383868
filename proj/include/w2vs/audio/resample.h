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

// Factor-of-two sample-rate conversion between 8 kHz and 16 kHz.
//
// Up-sampling produces exactly 2L samples; down-sampling keeps the even
// samples, ceil(L/2) of them. Filtered outputs are clamped to [-1, 1].

#ifndef W2VS_AUDIO_RESAMPLE_H_
#define W2VS_AUDIO_RESAMPLE_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "w2vs/audio/audio_buffer.h"

namespace w2vs::audio {

enum class ResampleMethod { kNearest, kLinear, kSinc };

/// "nearest", "linear" or "sinc".
ResampleMethod ParseResampleMethod(std::string_view name);
std::string ResampleMethodName(ResampleMethod method);

/// out[n] = in[n / 2].
std::vector<float> NnUpsampleX2(std::span<const float> in);

/// Symmetric Kaiser-windowed sinc low-pass with unit DC gain.
std::vector<double> KaiserLowpass(int taps, double cutoff_hz, double rate_hz,
                                  double beta);

/// Zero-extended "same" FIR filtering: out[n] = sum_j h[j] x[n + j - taps/2].
std::vector<double> FilterSame(std::span<const float> x, std::span<const double> h);

inline constexpr int kSincTaps = 33;
inline constexpr double kSincCutoffFraction = 0.45;
inline constexpr double kSincKaiserBeta = 6.0;

/// Converts between 8 and 16 kHz. A target equal to the source rate, or any
/// ratio other than 2 or 1/2, is an error.
AudioBuffer Resample(const AudioBuffer& audio, int target_rate, ResampleMethod method);

}  // namespace w2vs::audio

#endif  // W2VS_AUDIO_RESAMPLE_H_
