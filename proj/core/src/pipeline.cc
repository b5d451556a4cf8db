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

#include "emoalign/pipeline.h"

#include <filesystem>

#include "emoalign/parallel.h"

namespace emoalign {

void ModelConfig::Resolve() {
  encoder.n_mels = frontend.n_mels;
  qformer.d_encoder = encoder.d_model;
  qformer.d_decoder = decoder.d_model;
}

void ModelConfig::Validate() const {
  frontend.Validate();
  encoder.Validate();
  qformer.Validate();
  decoder.Validate();
  if (encoder.n_mels != frontend.n_mels || qformer.d_encoder != encoder.d_model ||
      qformer.d_decoder != decoder.d_model) {
    throw ValidationError("model config: module widths are inconsistent");
  }
  const int length =
      1 + qformer.n_queries +
      static_cast<int>(Vocab::Build(decoder.prompt).prompt_ids().size()) + 1;
  if (length > decoder.max_length) {
    throw ValidationError("model config: decoder max_length " +
                          std::to_string(decoder.max_length) +
                          " is shorter than the assembled sequence (" +
                          std::to_string(length) + ")");
  }
}

namespace {

ModelConfig Resolved(ModelConfig c) {
  c.Resolve();
  c.Validate();
  return c;
}

}  // namespace

Models::Models(const ModelConfig& c)
    : config(Resolved(c)),
      encoder(config.encoder),
      qformer(InitQFormer(config.qformer, config.qformer_seed)),
      decoder(config.decoder) {}

WaveLoader FileWaveLoader(std::string base_dir) {
  return [base = std::move(base_dir)](const Utterance& u) {
    std::filesystem::path p(u.audio_path);
    if (p.is_relative()) p = std::filesystem::path(base) / p;
    return ReadWav(p.string());
  };
}

namespace {

// Boxcar low-pass followed by integer-factor decimation.
std::vector<double> Decimate(const std::vector<double>& x, int factor) {
  std::vector<double> y(x.size() / factor);
  for (size_t i = 0; i < y.size(); ++i) {
    double acc = 0.0;
    for (int k = 0; k < factor; ++k) acc += x[i * factor + k];
    y[i] = acc / factor;
  }
  return y;
}

}  // namespace

LogMelSpec WaveToLogMel(const FrameParams& fp, const Waveform& wave) {
  std::vector<double> samples = wave.samples;
  if (wave.sample_rate != fp.sample_rate) {
    if (wave.sample_rate % fp.sample_rate != 0) {
      throw ValidationError("audio sample rate " + std::to_string(wave.sample_rate) +
                            " is not an integer multiple of " +
                            std::to_string(fp.sample_rate));
    }
    samples = Decimate(samples, wave.sample_rate / fp.sample_rate);
  }
  // Clips shorter than one analysis frame are zero-padded to a single frame.
  if (samples.size() < static_cast<size_t>(fp.n_fft)) samples.resize(fp.n_fft, 0.0);
  return LogMel(samples, fp);
}

Matrix ExtractFeatures(const Models& models, const Waveform& wave) {
  return models.encoder.Encode(WaveToLogMel(models.config.frontend, wave)).features;
}

FeatureBank BuildFeatureBank(const Models& models, const Manifest& manifest,
                             const WaveLoader& loader, int threads) {
  FeatureBank bank;
  const size_t n = manifest.entries.size();
  bank.features.resize(n);
  bank.labels.resize(n);
  ParallelFor(n, threads, [&](size_t i) {
    const Utterance& u = manifest.entries[i];
    bank.features[i] = ExtractFeatures(models, loader(u));
    bank.labels[i] = Code(u.emotion);
  });
  return bank;
}

UtteranceForward RunUtterance(const Models& models, const Matrix& features,
                              bool retain) {
  UtteranceForward f;
  const QFormerParams& p = models.qformer.params;
  f.query_output = QFormerForward(p, features, retain ? &f.qformer_cache : nullptr);
  f.pooled = PoolQueries(f.query_output);
  const Matrix audio = ProjectToDecoder(p, f.query_output, retain ? &f.proj_cache : nullptr);
  f.logits = models.decoder.DecodeLogits(models.decoder.Assemble(audio),
                                         retain ? &f.decoder_cache : nullptr);
  return f;
}

}  // namespace emoalign
