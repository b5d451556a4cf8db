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
#include <random>

#include "emoalign/wav.h"
#include "gtest/gtest.h"

namespace emoalign {
namespace {

// Direct O(N^2) DFT magnitude of one windowed frame.
std::vector<double> DftMagnitude(const std::vector<double>& frame) {
  const size_t n = frame.size();
  std::vector<double> out(n / 2 + 1);
  for (size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (size_t t = 0; t < n; ++t) {
      acc += frame[t] * std::polar(1.0, -2.0 * std::numbers::pi * k * t / n);
    }
    out[k] = std::abs(acc);
  }
  return out;
}

std::vector<double> Sine(double hz, int sr, size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / sr);
  return x;
}

TEST(StftTest, ZeroSignalGivesZeroMagnitudes) {
  FrameParams p;
  const Matrix mag = StftMagnitude(std::vector<double>(2000, 0.0), p);
  EXPECT_EQ(mag.cols(), p.num_bins());
  EXPECT_EQ(mag.cwiseAbs().maxCoeff(), 0.0);
}

TEST(StftTest, SineArgmaxBin) {
  FrameParams p;
  const Matrix mag = StftMagnitude(Sine(440.0, 16000, 4000), p);
  for (Eigen::Index t = 0; t < mag.rows(); ++t) {
    Eigen::Index arg = 0;
    mag.row(t).maxCoeff(&arg);
    EXPECT_EQ(arg, 14) << "frame " << t;
  }
}

TEST(StftTest, ImpulseRectangularIsFlat) {
  FrameParams p;
  p.window = WindowType::kRectangular;
  std::vector<double> x(1024, 0.0);
  x[0] = 1.0;
  const Matrix mag = StftMagnitude(x, p);
  for (Eigen::Index k = 0; k < mag.cols(); ++k) EXPECT_NEAR(mag(0, k), 1.0, 1e-12);
}

TEST(StftTest, MatchesDirectDft) {
  FrameParams p;
  p.n_fft = 64;
  p.hop = 24;
  std::mt19937_64 gen(3);
  std::normal_distribution<double> dist;
  std::vector<double> x(300);
  for (auto& v : x) v = dist(gen);
  const Matrix mag = StftMagnitude(x, p);
  const Vector w = MakeWindow(p);
  ASSERT_EQ(mag.rows(), p.NumFrames(x.size()));
  for (Eigen::Index t = 0; t < mag.rows(); ++t) {
    std::vector<double> frame(p.n_fft);
    for (int i = 0; i < p.n_fft; ++i) frame[i] = x[t * p.hop + i] * w[i];
    const auto ref = DftMagnitude(frame);
    for (Eigen::Index k = 0; k < mag.cols(); ++k) EXPECT_NEAR(mag(t, k), ref[k], 1e-10);
  }
}

TEST(StftTest, FrameCountFormulaAndShortSignal) {
  FrameParams p;
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t len = 512 + gen() % 5000;
    const Matrix mag = StftMagnitude(std::vector<double>(len, 0.1), p);
    EXPECT_EQ(mag.rows(), static_cast<Eigen::Index>(1 + (len - 512) / 160));
  }
  EXPECT_THROW(StftMagnitude(std::vector<double>(511, 0.0), p), ValidationError);
}

TEST(StftTest, PowerScalesQuadratically) {
  FrameParams p;
  const auto x = Sine(700.0, 16000, 3000);
  auto y = x;
  for (auto& v : y) v *= 3.0;
  const double px = StftMagnitude(x, p).squaredNorm();
  const double py = StftMagnitude(y, p).squaredNorm();
  EXPECT_NEAR(py / px, 9.0, 1e-9);
}

TEST(MelTest, ScaleFormula) {
  // The 2595 / 700 constants put 1000 Hz at 999.98554 mel, not exactly 1000.
  EXPECT_NEAR(HzToMel(1000.0), 999.98553713962, 1e-9);
  EXPECT_NEAR(HzToMel(1000.0), 1000.0, 0.015);
  EXPECT_EQ(HzToMel(0.0), 0.0);
  EXPECT_NEAR(MelToHz(HzToMel(3210.0)), 3210.0, 1e-9);
}

TEST(MelTest, FilterbankRowsAreContiguousAndNonnegative) {
  FrameParams p;
  const Matrix fb = MelFilterbank(p);
  ASSERT_EQ(fb.rows(), p.n_mels);
  ASSERT_EQ(fb.cols(), p.num_bins());
  Eigen::Index first_bin = fb.cols();
  Eigen::Index last_bin = 0;
  for (Eigen::Index r = 0; r < fb.rows(); ++r) {
    EXPECT_GE(fb.row(r).minCoeff(), 0.0);
    EXPECT_GT(fb.row(r).sum(), 0.0);
    Eigen::Index lo = -1;
    Eigen::Index hi = -1;
    for (Eigen::Index c = 0; c < fb.cols(); ++c) {
      if (fb(r, c) > 0) {
        if (lo < 0) lo = c;
        hi = c;
      }
    }
    for (Eigen::Index c = lo; c <= hi; ++c) EXPECT_GT(fb(r, c), 0.0) << r << "," << c;
    first_bin = std::min(first_bin, lo);
    last_bin = std::max(last_bin, hi);
  }
  for (Eigen::Index c = first_bin; c <= last_bin; ++c) EXPECT_GT(fb.col(c).sum(), 0.0);
}

TEST(MelTest, TooManyMelsIsAnError) {
  FrameParams p;
  p.n_fft = 64;
  p.hop = 32;
  p.n_mels = 60;
  EXPECT_THROW(MelFilterbank(p), ValidationError);
}

TEST(LogMelTest, SilenceHitsTheFloor) {
  FrameParams p;
  const LogMelSpec s = LogMel(std::vector<double>(1600, 0.0), p);
  EXPECT_EQ(s.values.cols(), p.n_mels);
  for (Eigen::Index i = 0; i < s.values.size(); ++i) {
    EXPECT_NEAR(s.values.data()[i], std::log(1e-10), 1e-12);
  }
}

TEST(LogMelTest, DoublingAmplitudeAddsLogFour) {
  FrameParams p;
  const auto x = Sine(523.0, 16000, 4000, 0.3);
  auto y = x;
  for (auto& v : y) v *= 2.0;
  const LogMelSpec a = LogMel(x, p);
  const LogMelSpec b = LogMel(y, p);
  for (Eigen::Index i = 0; i < a.values.size(); ++i) {
    if (a.values.data()[i] > std::log(1e-10) + 5.0) {
      EXPECT_NEAR(b.values.data()[i] - a.values.data()[i], std::log(4.0), 1e-9);
    }
  }
  EXPECT_EQ(LogMel(x, p).values, a.values);
}

TEST(MeanSpectrogramTest, Means) {
  LogMelSpec s;
  s.values = Matrix::Constant(5, 3, 2.5);
  EXPECT_TRUE(MeanSpectrogram(s).isApprox(Vector::Constant(3, 2.5)));
  s.values = Matrix(1, 3);
  s.values << 1, 2, 3;
  EXPECT_EQ(MeanSpectrogram(s), Vector(s.values.row(0).transpose()));
  s.values = Matrix(2, 3);
  s.values << 0, 0, 0, 4, 6, 8;
  EXPECT_TRUE(MeanSpectrogram(s).isApprox(Vector((Vector(3) << 2, 3, 4).finished())));
  s.values = Matrix(0, 3);
  EXPECT_THROW(MeanSpectrogram(s), ValidationError);
}

TEST(WavTest, Pcm16RoundTrip) {
  Waveform w;
  w.sample_rate = 16000;
  w.samples = {0.0, 0.5, -0.5, 1.0, -1.0, 0.25};
  const Waveform q = QuantizePcm16(w);
  const auto bytes = EncodeWavPcm16(w);
  EXPECT_EQ(bytes.size(), kWavHeaderBytes + 2 * w.samples.size());
  const Waveform back = DecodeWav(bytes);
  EXPECT_EQ(back.sample_rate, 16000);
  EXPECT_EQ(back.samples, q.samples);
  EXPECT_EQ(EncodeWavPcm16(back), bytes);
}

TEST(WavTest, RejectsGarbage) {
  std::vector<uint8_t> junk(100, 7);
  EXPECT_THROW(DecodeWav(junk), ValidationError);
}

}  // namespace
}  // namespace emoalign
