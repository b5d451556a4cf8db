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

#ifndef EMOALIGN_FRONTEND_H_
#define EMOALIGN_FRONTEND_H_

#include <span>

#include "emoalign/common.h"

namespace emoalign {

enum class WindowType { kHann, kRectangular };

struct FrameParams {
  int n_fft = 512;
  int hop = 160;
  WindowType window = WindowType::kHann;
  int n_mels = 40;
  int sample_rate = 16000;
  double log_floor_eps = 1e-10;

  int num_bins() const { return n_fft / 2 + 1; }
  int NumFrames(size_t num_samples) const;
  void Validate() const;
};

struct LogMelSpec {
  Matrix values;  // frames x n_mels, natural log
  FrameParams params;

  int frames() const { return static_cast<int>(values.rows()); }
};

double HzToMel(double hz);
double MelToHz(double mel);

// Periodic window of length n_fft.
Vector MakeWindow(const FrameParams& p);

// frames x (n_fft/2 + 1). Frame t covers samples [t*hop, t*hop + n_fft).
Matrix StftMagnitude(std::span<const double> wave, const FrameParams& p);

// n_mels x (n_fft/2 + 1) triangular filters with band edges equally spaced
// on the mel scale between 0 and sr/2. Throws if any filter covers no bin.
Matrix MelFilterbank(const FrameParams& p);

LogMelSpec LogMel(std::span<const double> wave, const FrameParams& p);

// Time-average of a log-mel spectrogram.
Vector MeanSpectrogram(const LogMelSpec& spec);

}  // namespace emoalign

#endif  // EMOALIGN_FRONTEND_H_
