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

#include "emoalign/encoder.h"

#include <cmath>

namespace emoalign {

void EncoderConfig::Validate() const {
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
    throw ValidationError("encoder: d_model (" + std::to_string(d_model) +
                          ") must be divisible by n_heads (" +
                          std::to_string(n_heads) + ")");
  }
  if (n_layers < 1) throw ValidationError("encoder: n_layers must be >= 1");
  if (n_mels < 1) throw ValidationError("encoder: n_mels must be >= 1");
  if (max_frames < 1) throw ValidationError("encoder: max_frames must be >= 1");
  if (ff_mult < 1) throw ValidationError("encoder: ff_mult must be >= 1");
  if (!(input_scale > 0)) throw ValidationError("encoder: input_scale must be > 0");
}

Encoder::Encoder(const EncoderConfig& config) : config_(config) {
  config_.Validate();
  Rng rng(Mix64(config_.init_seed));
  params_.input_proj = MakeLinear(config_.n_mels, config_.d_model, rng);
  for (int l = 0; l < config_.n_layers; ++l) {
    TransformerBlock b;
    b.attn_norm = MakeLayerNorm(config_.d_model);
    b.attn = MakeAttention(config_.d_model, config_.n_heads, rng);
    b.ffn_norm = MakeLayerNorm(config_.d_model);
    b.ffn = MakeFeedForward(config_.d_model, config_.ff_mult * config_.d_model, rng);
    params_.blocks.push_back(std::move(b));
  }
  params_.final_norm = MakeLayerNorm(config_.d_model);
  positions_ = SinusoidalPositions(config_.max_frames, config_.d_model);
  checksum_ = Checksum(params_);
}

void Encoder::RestoreParams(EncoderParams params) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> want;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> got;
  VisitTensors(params_, "", [&](const std::string&, const Matrix& t) {
    want.emplace_back(t.rows(), t.cols());
  });
  VisitTensors(params, "", [&](const std::string&, const Matrix& t) {
    got.emplace_back(t.rows(), t.cols());
  });
  if (want != got) throw ValidationError("encoder: parameter shapes do not match config");
  params_ = std::move(params);
  checksum_ = Checksum(params_);
}

EncodeOutput Encoder::Encode(const LogMelSpec& spec) const {
  return Encode(spec.values);
}

EncodeOutput Encoder::Encode(const Matrix& log_mel) const {
  if (log_mel.rows() == 0) throw ValidationError("encoder: zero input frames");
  if (log_mel.cols() != config_.n_mels) {
    throw ValidationError("encoder: expected " + std::to_string(config_.n_mels) +
                          " mel bins, got " + std::to_string(log_mel.cols()));
  }
  EncodeOutput out;
  out.input_frames = static_cast<int>(log_mel.rows());
  const int frames = std::min(out.input_frames, config_.max_frames);
  out.truncated = frames < out.input_frames;

  const Matrix x = (log_mel.topRows(frames).array() - config_.input_offset) /
                   config_.input_scale;
  Matrix h = Forward(params_.input_proj, x, nullptr);
  if (config_.positional_encoding) h += positions_.topRows(frames);
  for (const auto& b : params_.blocks) {
    const Matrix a = Forward(b.attn_norm, h, nullptr);
    h += Forward(b.attn, a, a, /*causal=*/false, nullptr);
    h += Forward(b.ffn, Forward(b.ffn_norm, h, nullptr), nullptr);
  }
  out.features = Forward(params_.final_norm, h, nullptr);
  return out;
}

}  // namespace emoalign
