// Copyright 2026 The emoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "emoalign/wav.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "emoalign/common.h"

namespace emoalign {

namespace {

void PutU32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void PutU16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

uint32_t GetU32(std::span<const uint8_t> b, size_t at) {
  return uint32_t{b[at]} | uint32_t{b[at + 1]} << 8 | uint32_t{b[at + 2]} << 16 |
         uint32_t{b[at + 3]} << 24;
}

uint16_t GetU16(std::span<const uint8_t> b, size_t at) {
  return static_cast<uint16_t>(b[at] | b[at + 1] << 8);
}

int16_t ToPcm16(double x) {
  const double clipped = std::clamp(x, -1.0, 1.0);
  return static_cast<int16_t>(std::lround(clipped * 32767.0));
}

}  // namespace

std::vector<uint8_t> EncodeWavPcm16(const Waveform& wave) {
  if (wave.sample_rate <= 0) throw ValidationError("wav: bad sample rate");
  const uint32_t data_bytes = static_cast<uint32_t>(wave.samples.size() * 2);
  std::vector<uint8_t> out;
  out.reserve(kWavHeaderBytes + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  PutU32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  PutU32(out, 16);
  PutU16(out, 1);  // PCM
  PutU16(out, 1);  // mono
  PutU32(out, static_cast<uint32_t>(wave.sample_rate));
  PutU32(out, static_cast<uint32_t>(wave.sample_rate) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  PutU32(out, data_bytes);
  for (double x : wave.samples) PutU16(out, static_cast<uint16_t>(ToPcm16(x)));
  return out;
}

Waveform DecodeWav(std::span<const uint8_t> b) {
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
      std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw ValidationError("wav: not a RIFF/WAVE file");
  }
  int channels = 0;
  int bits = 0;
  int rate = 0;
  size_t at = 12;
  while (at + 8 <= b.size()) {
    const uint32_t size = GetU32(b, at + 4);
    const size_t body = at + 8;
    if (body + size > b.size()) throw ValidationError("wav: truncated chunk");
    if (std::memcmp(b.data() + at, "fmt ", 4) == 0) {
      if (size < 16) throw ValidationError("wav: short fmt chunk");
      if (GetU16(b, body) != 1) throw ValidationError("wav: only PCM is supported");
      channels = GetU16(b, body + 2);
      rate = static_cast<int>(GetU32(b, body + 4));
      bits = GetU16(b, body + 14);
    } else if (std::memcmp(b.data() + at, "data", 4) == 0) {
      if (channels < 1 || bits != 16 || rate <= 0) {
        throw ValidationError("wav: expected 16-bit PCM before data chunk");
      }
      Waveform w;
      w.sample_rate = rate;
      const size_t frames = size / (2 * static_cast<size_t>(channels));
      w.samples.resize(frames);
      for (size_t i = 0; i < frames; ++i) {
        // First channel only.
        const auto v = static_cast<int16_t>(GetU16(b, body + i * 2 * channels));
        w.samples[i] = v / 32767.0;
      }
      return w;
    }
    at = body + size + (size & 1);
  }
  throw ValidationError("wav: no data chunk");
}

void WriteWav(const std::string& path, const Waveform& wave) {
  const auto bytes = EncodeWavPcm16(wave);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Waveform ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open audio file " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  try {
    return DecodeWav(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

Waveform QuantizePcm16(const Waveform& wave) {
  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples.resize(wave.samples.size());
  for (size_t i = 0; i < wave.samples.size(); ++i) {
    out.samples[i] = ToPcm16(wave.samples[i]) / 32767.0;
  }
  return out;
}

}  // namespace emoalign
