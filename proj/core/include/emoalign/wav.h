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

#ifndef EMOALIGN_WAV_H_
#define EMOALIGN_WAV_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace emoalign {

struct Waveform {
  int sample_rate = 16000;
  std::vector<double> samples;  // mono, nominal range [-1, 1]

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// 16-bit PCM mono RIFF/WAVE. Samples are clipped to [-1, 1] and rounded.
std::vector<uint8_t> EncodeWavPcm16(const Waveform& wave);
Waveform DecodeWav(std::span<const uint8_t> bytes);

void WriteWav(const std::string& path, const Waveform& wave);
Waveform ReadWav(const std::string& path);

// Round-trips a waveform through 16-bit quantization.
Waveform QuantizePcm16(const Waveform& wave);

inline constexpr int64_t kWavHeaderBytes = 44;

}  // namespace emoalign

#endif  // EMOALIGN_WAV_H_
