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

#include "emoalign/frontend.h"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace emoalign {

int FrameParams::NumFrames(size_t num_samples) const {
  if (num_samples < static_cast<size_t>(n_fft)) return 0;
  return 1 + static_cast<int>((num_samples - n_fft) / hop);
}

void FrameParams::Validate() const {
  if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0) {
    throw ValidationError("frontend: n_fft must be a power of two");
  }
  if (hop <= 0 || hop > n_fft) {
    throw ValidationError("frontend: hop must satisfy 0 < hop <= n_fft");
  }
  if (n_mels < 1) throw ValidationError("frontend: n_mels must be >= 1");
  if (sample_rate <= 0) throw ValidationError("frontend: sample_rate must be > 0");
  if (!(log_floor_eps > 0)) throw ValidationError("frontend: log_floor_eps must be > 0");
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Vector MakeWindow(const FrameParams& p) {
  Vector w(p.n_fft);
  for (int i = 0; i < p.n_fft; ++i) {
    w(i) = p.window == WindowType::kHann
               ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / p.n_fft)
               : 1.0;
  }
  return w;
}

Matrix StftMagnitude(std::span<const double> wave, const FrameParams& p) {
  p.Validate();
  const int frames = p.NumFrames(wave.size());
  if (frames == 0) {
    throw ValidationError("frontend: signal of " + std::to_string(wave.size()) +
                          " samples is shorter than one frame (" +
                          std::to_string(p.n_fft) + ")");
  }
  const Vector window = MakeWindow(p);
  const int bins = p.num_bins();
  Matrix mag(frames, bins);
  Eigen::FFT<double> fft;
  std::vector<double> frame(p.n_fft);
  std::vector<std::complex<double>> spectrum;
  for (int t = 0; t < frames; ++t) {
    const size_t start = static_cast<size_t>(t) * p.hop;
    for (int i = 0; i < p.n_fft; ++i) frame[i] = wave[start + i] * window(i);
    fft.fwd(spectrum, frame);
    for (int k = 0; k < bins; ++k) mag(t, k) = std::abs(spectrum[k]);
  }
  return mag;
}

Matrix MelFilterbank(const FrameParams& p) {
  p.Validate();
  const int bins = p.num_bins();
  const double mel_max = HzToMel(p.sample_rate / 2.0);
  std::vector<double> edges(p.n_mels + 2);
  for (int i = 0; i < p.n_mels + 2; ++i) {
    edges[i] = MelToHz(mel_max * i / (p.n_mels + 1));
  }
  Matrix fb = Matrix::Zero(p.n_mels, bins);
  for (int m = 0; m < p.n_mels; ++m) {
    const double lo = edges[m];
    const double center = edges[m + 1];
    const double hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * p.sample_rate / p.n_fft;
      double w = 0.0;
      if (f > lo && f <= center) {
        w = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        w = (hi - f) / (hi - center);
      }
      fb(m, k) = w;
    }
    if (fb.row(m).sum() <= 0.0) {
      throw ValidationError("frontend: mel filter " + std::to_string(m) +
                            " covers no FFT bin; reduce n_mels or raise n_fft");
    }
  }
  return fb;
}

LogMelSpec LogMel(std::span<const double> wave, const FrameParams& p) {
  const Matrix mag = StftMagnitude(wave, p);
  const Matrix fb = MelFilterbank(p);
  const Matrix power = mag.array().square();
  Matrix mel = power * fb.transpose();
  const double floor = p.log_floor_eps;
  LogMelSpec spec;
  spec.params = p;
  spec.values = mel.unaryExpr([floor](double v) { return std::log(std::max(v, floor)); });
  return spec;
}

Vector MeanSpectrogram(const LogMelSpec& spec) {
  if (spec.values.rows() == 0) {
    throw ValidationError("frontend: mean of a spectrogram with zero frames");
  }
  return spec.values.colwise().mean().transpose();
}

}  // namespace emoalign
