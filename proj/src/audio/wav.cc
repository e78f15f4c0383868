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

#include "w2vs/audio/wav.h"

#include <cmath>
#include <cstring>
#include <string>

#include "w2vs/common/error.h"
#include "w2vs/common/file_util.h"

namespace w2vs::audio {

namespace {

void PutU16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view Tag(const char* field) { return Take(4, field); }

  std::uint16_t U16(const char* field) {
    auto b = Take(2, field);
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[0]) |
                                      (static_cast<unsigned char>(b[1]) << 8));
  }

  std::uint32_t U32(const char* field) {
    auto b = Take(4, field);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  }

  std::string_view Take(std::size_t n, const char* field) {
    if (bytes_.size() - pos_ < n) {
      throw WavError(std::string("wav: unexpected end of data while reading ") + field);
    }
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  void Skip(std::size_t n, const char* field) { Take(n, field); }
  bool AtEnd() const { return pos_ >= bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::int16_t QuantizePcm16(float v) {
  const double scaled = std::nearbyint(static_cast<double>(v) * 32768.0);
  if (scaled >= 32767.0) return 32767;
  if (scaled <= -32768.0) return -32768;
  return static_cast<std::int16_t>(scaled);
}

std::string EncodeWav(const AudioBuffer& audio) {
  ValidateAudio(audio);
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  PutU32(out, 36 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  PutU32(out, 16);
  PutU16(out, 1);  // PCM
  PutU16(out, 1);  // mono
  PutU32(out, static_cast<std::uint32_t>(audio.sample_rate));
  PutU32(out, static_cast<std::uint32_t>(audio.sample_rate) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  out += "data";
  PutU32(out, data_bytes);
  for (float v : audio.samples) PutU16(out, static_cast<std::uint16_t>(QuantizePcm16(v)));
  return out;
}

AudioBuffer DecodeWav(std::string_view bytes) {
  Reader r(bytes);
  if (r.Tag("riff_id") != "RIFF") throw WavError("wav: riff_id is not 'RIFF'");
  r.U32("riff_size");
  if (r.Tag("wave_id") != "WAVE") throw WavError("wav: wave_id is not 'WAVE'");

  bool have_fmt = false;
  AudioBuffer audio;
  while (true) {
    if (r.AtEnd()) {
      throw WavError(have_fmt ? "wav: unexpected end of data, no data chunk"
                              : "wav: unexpected end of data, no fmt chunk");
    }
    const std::string_view id = r.Tag("chunk_id");
    const std::uint32_t size = r.U32("chunk_size");
    if (id == "fmt ") {
      if (size < 16) throw WavError("wav: fmt chunk_size " + std::to_string(size) + " < 16");
      const std::uint16_t format = r.U16("audio_format");
      if (format != 1) {
        throw WavError("wav: audio_format " + std::to_string(format) +
                       " is not PCM (1); compressed audio is unsupported");
      }
      const std::uint16_t channels = r.U16("num_channels");
      if (channels != 1) {
        throw WavError("wav: num_channels " + std::to_string(channels) + " (only mono is supported)");
      }
      const std::uint32_t rate = r.U32("sample_rate");
      r.U32("byte_rate");
      r.U16("block_align");
      const std::uint16_t bits = r.U16("bits_per_sample");
      if (bits != 16) {
        throw WavError("wav: bits_per_sample " + std::to_string(bits) + " (only 16 is supported)");
      }
      r.Skip(size - 16 + (size & 1), "fmt extension");
      if (!IsSupportedRate(static_cast<int>(rate))) {
        throw WavError("wav: sample_rate " + std::to_string(rate) +
                       " (supported: 8000, 16000)");
      }
      audio.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw WavError("wav: data chunk before fmt chunk");
      if (size % 2 != 0) throw WavError("wav: data chunk_size " + std::to_string(size) + " is odd");
      if (size == 0) throw WavError("wav: data chunk_size is 0 (empty audio)");
      std::string_view payload = r.Take(size, "data samples");
      audio.samples.resize(size / 2);
      for (std::size_t i = 0; i < audio.samples.size(); ++i) {
        const auto lo = static_cast<unsigned char>(payload[2 * i]);
        const auto hi = static_cast<unsigned char>(payload[2 * i + 1]);
        const auto s = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
        audio.samples[i] = DequantizePcm16(s);
      }
      return audio;
    } else {
      r.Skip(size + (size & 1), "chunk body");
    }
  }
}

AudioBuffer LoadWav(const std::filesystem::path& path) {
  try {
    return DecodeWav(ReadFile(path));
  } catch (const WavError& e) {
    throw WavError(path.string() + ": " + e.what());
  }
}

void SaveWav(const AudioBuffer& audio, const std::filesystem::path& path) {
  WriteFileAtomic(path, EncodeWav(audio));
}

}  // namespace w2vs::audio
