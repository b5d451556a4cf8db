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

#ifndef EMOALIGN_SYNTH_H_
#define EMOALIGN_SYNTH_H_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emoalign/corpus.h"
#include "emoalign/wav.h"

namespace emoalign {

// Procedural stand-in for emotion-preserving speech translation: a harmonic
// source whose pitch and loudness follow the emotion, filtered through a
// language-specific resonance pair.
struct ProsodyParams {
  double base_f0_hz = 150.0;
  double f0_slope = 0.0;       // relative f0 change across the utterance
  double level_db = -12.0;     // mean level relative to full scale
  double modulation_depth = 0.4;  // syllabic amplitude modulation, [0, 1)
  double decay = 0.0;          // >0 fades out, <0 swells
  double tempo = 1.0;          // syllable-rate multiplier
};

struct TimbreParams {
  double resonance1_hz = 500.0;
  double resonance2_hz = 1500.0;
  double tilt = 0.0;  // first-order spectral tilt coefficient in (-1, 1)
};

struct SynthesisProfile {
  std::array<ProsodyParams, kNumEmotions> prosody;
  std::map<std::string, TimbreParams> timbre;  // keyed by language code
  uint64_t seed = 1234;

  // Per-utterance speaker variation.
  double f0_jitter = 0.12;     // log-normal sigma on f0
  double level_jitter_db = 3.0;
  double resonance_jitter = 0.06;
  double noise_db = -45.0;

  static SynthesisProfile Default();
  // Built-in timbre, or a hash-derived one for codes outside the built-ins.
  TimbreParams TimbreFor(const LanguageTag& language) const;
  void Validate() const;
};

struct SynthRequest {
  std::vector<LanguageTag> languages;
  std::vector<Emotion> emotions;
  int per_cell = 10;
  int sample_rate = 16000;
  double min_duration_s = 1.0;
  double max_duration_s = 2.0;
  // Dataset name per language; languages not listed use default_dataset.
  std::map<std::string, std::string> dataset_by_language;
  std::string default_dataset = "m5-synth";
  // Languages whose rows are marked synthetic=false (stand-ins for the
  // human-annotated English source corpora).
  std::vector<std::string> natural_languages;
  std::string audio_dir = "audio";
};

struct SynthCorpus {
  Manifest manifest;
  std::vector<Waveform> waveforms;  // parallel to manifest.entries, quantized
};

// Deterministic in (profile.seed, language, emotion, index).
Waveform SynthesizeUtterance(const SynthesisProfile& profile,
                             const LanguageTag& language, Emotion emotion,
                             int index, int sample_rate, double min_duration_s,
                             double max_duration_s);

// Generates per_cell clips for each (language, emotion) in language-major
// order. Waveforms stay in memory; WriteSynthCorpus puts them on disk.
SynthCorpus SynthGenerate(const SynthesisProfile& profile,
                          const SynthRequest& request, int threads = 1);

// Writes <out_dir>/<audio_path> WAV files and <out_dir>/manifest.jsonl.
void WriteSynthCorpus(const SynthCorpus& corpus, const std::string& out_dir);

}  // namespace emoalign

#endif  // EMOALIGN_SYNTH_H_
