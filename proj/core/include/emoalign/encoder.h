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

#ifndef EMOALIGN_ENCODER_H_
#define EMOALIGN_ENCODER_H_

#include <cstdint>
#include <string>
#include <vector>

#include "emoalign/frontend.h"
#include "emoalign/nn.h"

namespace emoalign {

struct EncoderConfig {
  int n_mels = 40;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ff_mult = 4;
  int max_frames = 512;
  bool positional_encoding = true;
  // Fixed affine map applied to log-mel input before the projection.
  double input_offset = -4.0;
  double input_scale = 4.0;
  uint64_t init_seed = 17;

  void Validate() const;
};

struct TransformerBlock {
  LayerNorm attn_norm;
  Attention attn;
  LayerNorm ffn_norm;
  FeedForward ffn;
};

template <typename M, typename F>
  requires ModuleOf<M, TransformerBlock>
void VisitTensors(M&& m, const std::string& prefix, F&& f) {
  VisitTensors(m.attn_norm, prefix + ".attn_norm", f);
  VisitTensors(m.attn, prefix + ".attn", f);
  VisitTensors(m.ffn_norm, prefix + ".ffn_norm", f);
  VisitTensors(m.ffn, prefix + ".ffn", f);
}

struct EncoderParams {
  Linear input_proj;
  std::vector<TransformerBlock> blocks;
  LayerNorm final_norm;
};

template <typename M, typename F>
  requires ModuleOf<M, EncoderParams>
void VisitTensors(M&& m, const std::string& prefix, F&& f) {
  VisitTensors(m.input_proj, prefix + ".input_proj", f);
  for (size_t i = 0; i < m.blocks.size(); ++i) {
    VisitTensors(m.blocks[i], prefix + ".blocks." + std::to_string(i), f);
  }
  VisitTensors(m.final_norm, prefix + ".final_norm", f);
}

struct EncodeOutput {
  Matrix features;  // T x d_model
  int input_frames = 0;
  bool truncated = false;
};

// Frozen audio encoder: a seeded pre-norm transformer over log-mel frames.
// Parameters are fixed at construction; the class exposes no mutator except
// checkpoint restoration, which re-verifies the digest.
class Encoder {
 public:
  explicit Encoder(const EncoderConfig& config);

  EncodeOutput Encode(const LogMelSpec& spec) const;
  EncodeOutput Encode(const Matrix& log_mel) const;

  const EncoderConfig& config() const { return config_; }
  const EncoderParams& params() const { return params_; }
  bool frozen() const { return true; }
  uint64_t checksum() const { return checksum_; }
  // Recomputes the digest from the current parameters.
  uint64_t ComputeChecksum() const { return Checksum(params_); }

  // Replaces parameters (checkpoint load). Throws if the shapes differ.
  void RestoreParams(EncoderParams params);

 private:
  EncoderConfig config_;
  EncoderParams params_;
  Matrix positions_;
  uint64_t checksum_ = 0;
};

}  // namespace emoalign

#endif  // EMOALIGN_ENCODER_H_
