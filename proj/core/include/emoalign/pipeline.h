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

#ifndef EMOALIGN_PIPELINE_H_
#define EMOALIGN_PIPELINE_H_

#include <functional>
#include <string>
#include <vector>

#include "emoalign/corpus.h"
#include "emoalign/decoder.h"
#include "emoalign/encoder.h"
#include "emoalign/frontend.h"
#include "emoalign/qformer.h"
#include "emoalign/wav.h"

namespace emoalign {

struct ModelConfig {
  FrameParams frontend;
  EncoderConfig encoder;
  QFormerConfig qformer;
  DecoderConfig decoder;
  uint64_t qformer_seed = 101;

  // Copies shared widths between modules (n_mels, encoder/decoder widths).
  void Resolve();
  void Validate() const;
};

// Frozen encoder and decoder around the trainable connector.
struct Models {
  explicit Models(const ModelConfig& config);

  ModelConfig config;
  Encoder encoder;
  QFormerState qformer;
  Decoder decoder;
};

// Maps a manifest row to its waveform.
using WaveLoader = std::function<Waveform(const Utterance&)>;

// Reads WAV files; relative audio paths resolve against `base_dir`.
WaveLoader FileWaveLoader(std::string base_dir);

// Frontend + frozen encoder output for a set of utterances. Because the
// encoder never changes, features are computed once and reused by every
// training step and evaluation pass.
struct FeatureBank {
  std::vector<Matrix> features;  // parallel to manifest entries
  std::vector<int> labels;       // emotion codes
};

// Resamples by an integer factor when needed, then computes log-mel.
LogMelSpec WaveToLogMel(const FrameParams& params, const Waveform& wave);

Matrix ExtractFeatures(const Models& models, const Waveform& wave);

FeatureBank BuildFeatureBank(const Models& models, const Manifest& manifest,
                             const WaveLoader& loader, int threads);

// Everything the forward pass produces for one utterance.
struct UtteranceForward {
  QFormerCache qformer_cache;
  Matrix query_output;
  PooledEmbedding pooled;
  LinearCache proj_cache;
  DecoderCache decoder_cache;
  Vector logits;
};

// Inference-only when `retain` is false (no caches kept).
UtteranceForward RunUtterance(const Models& models, const Matrix& features,
                              bool retain);

}  // namespace emoalign

#endif  // EMOALIGN_PIPELINE_H_
