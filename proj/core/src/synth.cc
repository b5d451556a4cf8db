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

#include "emoalign/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "emoalign/parallel.h"
#include "emoalign/rng.h"

namespace emoalign {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kBaseSyllableRateHz = 4.0;
constexpr double kResonanceQ = 4.0;
constexpr double kResonanceGain = 2.5;
constexpr double kEdgeFadeS = 0.02;

// RBJ band-pass (0 dB peak gain), direct form I.
class BandPass {
 public:
  BandPass(double center_hz, double q, int sample_rate) {
    const double w0 = kTwoPi * center_hz / sample_rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;
  }

  double Process(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

}  // namespace

SynthesisProfile SynthesisProfile::Default() {
  SynthesisProfile p;
  //            f0     slope  level  depth decay tempo
  p.prosody[Code(Emotion::kNeutral)] = {130, 0.00, -22, 0.35, 0.0, 1.00};
  p.prosody[Code(Emotion::kHappy)] = {210, 0.25, -17, 0.60, 0.0, 1.20};
  p.prosody[Code(Emotion::kSad)] = {105, -0.20, -28, 0.20, 0.8, 0.70};
  p.prosody[Code(Emotion::kAngry)] = {185, -0.15, -14, 0.80, -0.2, 1.35};
  p.prosody[Code(Emotion::kSurprise)] = {250, 0.60, -18, 0.50, -0.6, 1.05};
  p.prosody[Code(Emotion::kDisgust)] = {120, -0.35, -24, 0.45, 0.4, 0.85};
  p.prosody[Code(Emotion::kFear)] = {235, 0.10, -23, 0.70, 0.0, 1.50};
  p.timbre = {
      {"en", {500, 1500, 0.00}}, {"fr", {420, 1650, 0.15}},
      {"de", {560, 1350, -0.10}}, {"it", {620, 1800, 0.05}},
      {"zh", {460, 1200, -0.20}}, {"es", {540, 1950, 0.25}},
  };
  return p;
}

TimbreParams SynthesisProfile::TimbreFor(const LanguageTag& language) const {
  if (auto it = timbre.find(language.code()); it != timbre.end()) {
    return it->second;
  }
  Rng rng(Mix64(HashString(language.code())));
  TimbreParams t;
  t.resonance1_hz = rng.Uniform(400.0, 650.0);
  t.resonance2_hz = rng.Uniform(1150.0, 2000.0);
  t.tilt = rng.Uniform(-0.25, 0.25);
  return t;
}

void SynthesisProfile::Validate() const {
  for (int i = 0; i < kNumEmotions; ++i) {
    const auto& p = prosody[i];
    if (p.base_f0_hz <= 0 || p.tempo <= 0 || p.modulation_depth < 0 ||
        p.modulation_depth >= 1) {
      throw ValidationError("synth: invalid prosody for " +
                            std::string(EmotionName(EmotionFromCode(i))));
    }
    for (int j = 0; j < i; ++j) {
      const auto& q = prosody[j];
      if (p.base_f0_hz == q.base_f0_hz && p.f0_slope == q.f0_slope &&
          p.level_db == q.level_db && p.modulation_depth == q.modulation_depth &&
          p.decay == q.decay && p.tempo == q.tempo) {
        throw ValidationError("synth: two emotions share a prosody tuple");
      }
    }
  }
  for (auto a = timbre.begin(); a != timbre.end(); ++a) {
    if (a->second.resonance1_hz <= 0 || a->second.resonance2_hz <= 0 ||
        std::abs(a->second.tilt) >= 1) {
      throw ValidationError("synth: invalid timbre for " + a->first);
    }
    for (auto b = timbre.begin(); b != a; ++b) {
      if (a->second.resonance1_hz == b->second.resonance1_hz &&
          a->second.resonance2_hz == b->second.resonance2_hz &&
          a->second.tilt == b->second.tilt) {
        throw ValidationError("synth: languages " + a->first + " and " +
                              b->first + " share a timbre tuple");
      }
    }
  }
  if (f0_jitter < 0 || level_jitter_db < 0 || resonance_jitter < 0) {
    throw ValidationError("synth: jitter must be nonnegative");
  }
}

Waveform SynthesizeUtterance(const SynthesisProfile& profile,
                             const LanguageTag& language, Emotion emotion,
                             int index, int sample_rate, double min_duration_s,
                             double max_duration_s) {
  uint64_t stream = CombineSeed(profile.seed, HashString(language.code()));
  stream = CombineSeed(stream, static_cast<uint64_t>(Code(emotion)) + 1);
  stream = CombineSeed(stream, static_cast<uint64_t>(index) + 1);
  Rng rng(stream);

  const ProsodyParams& pro = profile.prosody[Code(emotion)];
  TimbreParams tim = profile.TimbreFor(language);

  const double duration = rng.Uniform(min_duration_s, max_duration_s);
  const auto n = static_cast<size_t>(std::llround(duration * sample_rate));
  const double f0_scale = std::exp(profile.f0_jitter * rng.Normal());
  const double level_db = pro.level_db + profile.level_jitter_db * rng.Normal();
  tim.resonance1_hz *= 1.0 + profile.resonance_jitter * rng.Normal();
  tim.resonance2_hz *= 1.0 + profile.resonance_jitter * rng.Normal();
  const double syllable_phase = rng.Uniform(0.0, kTwoPi);
  const double vibrato_phase = rng.Uniform(0.0, kTwoPi);

  const double nyquist_guard = 0.45 * sample_rate;
  const double f0_peak = pro.base_f0_hz * f0_scale * (1.0 + std::abs(pro.f0_slope));
  const int harmonics = std::max(1, static_cast<int>(nyquist_guard / f0_peak));
  const double syllable_rate = kBaseSyllableRateHz * pro.tempo;

  std::vector<double> x(n);
  double phase = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double rel = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
    const double f0 = pro.base_f0_hz * f0_scale *
                      (1.0 + pro.f0_slope * (rel - 0.5)) *
                      (1.0 + 0.02 * std::sin(kTwoPi * 5.0 * t + vibrato_phase));
    phase += kTwoPi * f0 / sample_rate;
    if (phase > kTwoPi) phase -= kTwoPi;
    // sin(k * phase) by the Chebyshev recurrence.
    const double c2 = 2.0 * std::cos(phase);
    double s_prev = 0.0;
    double s_cur = std::sin(phase);
    double source = 0.0;
    for (int k = 1; k <= harmonics; ++k) {
      source += s_cur / k;
      const double s_next = c2 * s_cur - s_prev;
      s_prev = s_cur;
      s_cur = s_next;
    }
    const double syllable =
        (1.0 - pro.modulation_depth) +
        pro.modulation_depth * 0.5 *
            (1.0 - std::cos(kTwoPi * syllable_rate * t + syllable_phase));
    const double shape = std::exp(-2.0 * pro.decay * rel);
    const double fade =
        std::min({1.0, t / kEdgeFadeS, (duration - t) / kEdgeFadeS});
    x[i] = source * syllable * shape * std::max(0.0, fade);
  }

  BandPass r1(tim.resonance1_hz, kResonanceQ, sample_rate);
  BandPass r2(tim.resonance2_hz, kResonanceQ, sample_rate);
  std::vector<double> y(n);
  double prev = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double shaped = x[i] + kResonanceGain * (r1.Process(x[i]) + r2.Process(x[i]));
    y[i] = shaped - tim.tilt * prev;
    prev = shaped;
  }

  double energy = 0.0;
  for (double v : y) energy += v * v;
  const double rms = std::sqrt(energy / std::max<size_t>(1, n));
  const double gain = rms > 0 ? std::pow(10.0, level_db / 20.0) / rms : 0.0;
  const double noise = std::pow(10.0, profile.noise_db / 20.0);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    w.samples[i] = std::clamp(y[i] * gain + noise * rng.Normal(), -1.0, 1.0);
  }
  return QuantizePcm16(w);
}

SynthCorpus SynthGenerate(const SynthesisProfile& profile,
                          const SynthRequest& request, int threads) {
  profile.Validate();
  if (request.per_cell < 1) throw ValidationError("synth: per_cell must be >= 1");
  if (request.languages.empty()) throw ValidationError("synth: no languages");
  if (request.emotions.empty()) throw ValidationError("synth: no emotions");
  if (request.sample_rate < 8000) {
    throw ValidationError("synth: sample rate must be >= 8000");
  }
  if (!(request.min_duration_s > 0) ||
      request.max_duration_s < request.min_duration_s) {
    throw ValidationError("synth: invalid duration range");
  }

  struct Job {
    LanguageTag language;
    Emotion emotion;
    int index;
  };
  std::vector<Job> jobs;
  for (const auto& lang : request.languages) {
    for (Emotion e : request.emotions) {
      for (int i = 0; i < request.per_cell; ++i) jobs.push_back({lang, e, i});
    }
  }

  SynthCorpus corpus;
  corpus.manifest.provenance = "synth seed=" + std::to_string(profile.seed);
  corpus.waveforms.resize(jobs.size());
  ParallelFor(jobs.size(), threads, [&](size_t j) {
    corpus.waveforms[j] = SynthesizeUtterance(
        profile, jobs[j].language, jobs[j].emotion, jobs[j].index,
        request.sample_rate, request.min_duration_s, request.max_duration_s);
  });

  for (size_t j = 0; j < jobs.size(); ++j) {
    const auto& job = jobs[j];
    const std::string& code = job.language.code();
    Utterance u;
    auto ds = request.dataset_by_language.find(code);
    u.dataset = ds != request.dataset_by_language.end() ? ds->second
                                                        : request.default_dataset;
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "%04d", job.index);
    u.id = u.dataset + "-" + code + "-" +
           std::string(EmotionName(job.emotion)) + "-" + suffix;
    u.audio_path = request.audio_dir + "/" + u.id + ".wav";
    u.sample_rate = request.sample_rate;
    u.duration_s = corpus.waveforms[j].duration_s();
    u.size_bytes =
        kWavHeaderBytes + 2 * static_cast<int64_t>(corpus.waveforms[j].samples.size());
    u.language = job.language;
    u.emotion = job.emotion;
    u.split = Split::kTrain;
    u.synthetic = std::find(request.natural_languages.begin(),
                            request.natural_languages.end(),
                            code) == request.natural_languages.end();
    corpus.manifest.entries.push_back(std::move(u));
  }
  return corpus;
}

void WriteSynthCorpus(const SynthCorpus& corpus, const std::string& out_dir) {
  namespace fs = std::filesystem;
  for (size_t i = 0; i < corpus.manifest.entries.size(); ++i) {
    const fs::path path = fs::path(out_dir) / corpus.manifest.entries[i].audio_path;
    fs::create_directories(path.parent_path());
    WriteWav(path.string(), corpus.waveforms[i]);
  }
  SaveManifest(corpus.manifest, (fs::path(out_dir) / "manifest.jsonl").string());
}

}  // namespace emoalign
