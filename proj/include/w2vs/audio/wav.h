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

// Mono PCM16 little-endian RIFF/WAVE reading and writing.
//
// Quantisation: a sample v is stored as clamp(round(v * 32768), -32768, 32767)
// and read back as s / 32768, so 1.0 is written as 32767 and reloads as
// 32767/32768. The round trip is exact to within one LSB.

#ifndef W2VS_AUDIO_WAV_H_
#define W2VS_AUDIO_WAV_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "w2vs/audio/audio_buffer.h"

namespace w2vs::audio {

std::int16_t QuantizePcm16(float v);
inline float DequantizePcm16(std::int16_t s) { return static_cast<float>(s) / 32768.0f; }

std::string EncodeWav(const AudioBuffer& audio);
AudioBuffer DecodeWav(std::string_view bytes);

AudioBuffer LoadWav(const std::filesystem::path& path);
void SaveWav(const AudioBuffer& audio, const std::filesystem::path& path);

}  // namespace w2vs::audio

#endif  // W2VS_AUDIO_WAV_H_
