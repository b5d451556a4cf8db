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

#ifndef EMOALIGN_DECODER_H_
#define EMOALIGN_DECODER_H_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "emoalign/corpus.h"
#include "emoalign/encoder.h"
#include "emoalign/nn.h"

namespace emoalign {

inline constexpr std::string_view kBosToken = "[bos]";
inline constexpr std::string_view kEmoToken = "[emo]";
inline constexpr std::string_view kDefaultPrompt =
    "describe the emotion of the speech";

// Word-level vocabulary: [bos], [emo], the distinct prompt words in order of
// first appearance, the seven emotion words, then bracketed fillers.
class Vocab {
 public:
  static Vocab Build(std::string_view prompt_text);

  int size() const { return static_cast<int>(tokens_.size()); }
  int Id(std::string_view token) const;  // throws if absent
  bool Contains(std::string_view token) const;
  const std::string& Token(int id) const { return tokens_.at(id); }

  int bos_id() const { return 0; }
  int emo_id() const { return 1; }
  // Prompt as token ids, repeats included.
  const std::vector<int>& prompt_ids() const { return prompt_ids_; }
  const std::array<int, kNumEmotions>& emotion_ids() const {
    return emotion_ids_;
  }
  int EmotionTokenId(Emotion e) const { return emotion_ids_[Code(e)]; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
  std::vector<int> prompt_ids_;
  std::array<int, kNumEmotions> emotion_ids_{};
};

struct DecoderConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ff_mult = 4;
  int max_length = 64;
  uint64_t init_seed = 29;
  std::string prompt = std::string(kDefaultPrompt);

  void Validate() const;
};

struct DecoderBlock {
  LayerNorm self_norm;
  Attention self_attn;
  LayerNorm cross_norm;
  Attention cross_attn;
  LayerNorm ffn_norm;
  FeedForward ffn;
};

template <typename M, typename F>
  requires ModuleOf<M, DecoderBlock>
void VisitTensors(M&& m, const std::string& prefix, F&& f) {
  VisitTensors(m.self_norm, prefix + ".self_norm", f);
  VisitTensors(m.self_attn, prefix + ".self_attn", f);
  VisitTensors(m.cross_norm, prefix + ".cross_norm", f);
  VisitTensors(m.cross_attn, prefix + ".cross_attn", f);
  VisitTensors(m.ffn_norm, prefix + ".ffn_norm", f);
  VisitTensors(m.ffn, prefix + ".ffn", f);
}

struct DecoderParams {
  Matrix token_embedding;  // vocab x d_model
  LayerNorm memory_norm;
  std::vector<DecoderBlock> blocks;
  LayerNorm final_norm;
  Linear lm_head;  // d_model -> vocab
};

template <typename M, typename F>
  requires ModuleOf<M, DecoderParams>
void VisitTensors(M&& m, const std::string& prefix, F&& f) {
  f(prefix + ".token_embedding", m.token_embedding);
  VisitTensors(m.memory_norm, prefix + ".memory_norm", f);
  for (size_t i = 0; i < m.blocks.size(); ++i) {
    VisitTensors(m.blocks[i], prefix + ".blocks." + std::to_string(i), f);
  }
  VisitTensors(m.final_norm, prefix + ".final_norm", f);
  VisitTensors(m.lm_head, prefix + ".lm_head", f);
}

enum class SlotType { kBos, kAudio, kPrompt, kEmo };

// [bos, audio..., prompt..., [emo]] before positional encoding.
struct AssembledSequence {
  Matrix embeddings;  // length x d_model
  std::vector<SlotType> slots;
  Matrix audio;  // n_queries x d_model, the adapted connector vectors

  int length() const { return static_cast<int>(slots.size()); }
};

struct DecoderBlockCache {
  LayerNormCache self_norm;
  AttentionCache self_attn;
  LayerNormCache cross_norm;
  AttentionCache cross_attn;
  LayerNormCache ffn_norm;
  FeedForwardCache ffn;
};

struct DecoderCache {
  int audio_begin = 1;
  int audio_count = 0;
  LayerNormCache memory_norm;
  std::vector<DecoderBlockCache> blocks;
  LayerNormCache final_norm;
  LinearCache lm_head;
  bool valid = false;
};

// Frozen language-model stand-in. Scores the vocabulary at the [emo] slot.
class Decoder {
 public:
  explicit Decoder(const DecoderConfig& config);

  const DecoderConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  const DecoderParams& params() const { return params_; }
  bool frozen() const { return true; }
  uint64_t checksum() const { return checksum_; }
  uint64_t ComputeChecksum() const { return Checksum(params_); }
  void RestoreParams(DecoderParams params);

  // `audio` is n_queries x d_model, already adapted to decoder width.
  AssembledSequence Assemble(const Matrix& audio) const;

  // Logits over the vocabulary at the final ([emo]) position. Throws when the
  // sequence exceeds max_length.
  Vector DecodeLogits(const AssembledSequence& seq, DecoderCache* cache) const;

  // Gradient of a scalar w.r.t. the audio slots given d(logits). Decoder
  // parameters receive no gradient.
  Matrix BackwardToAudio(const DecoderCache& cache, const Vector& d_logits) const;

 private:
  DecoderConfig config_;
  Vocab vocab_;
  DecoderParams params_;
  Matrix positions_;
  uint64_t checksum_ = 0;
};

// Assembles with a connector-side linear adapter (connector width ->
// decoder width). Throws ValidationError if the adapter does not fit.
AssembledSequence AssembleSequence(const Decoder& decoder,
                                   const Linear& adapter,
                                   const Matrix& connector_out);

// Argmax over the emotion words allowed by `restrict`; ties go to the lowest
// label code. Throws ValidationError if `restrict` is empty.
Emotion PredictEmotion(const Vector& logits, const Vocab& vocab,
                       const std::vector<Emotion>& restrict);

// The 4-class protocol (neutral, happy, sad, angry) or all seven labels.
std::vector<Emotion> ClassSet(int num_classes);

}  // namespace emoalign

#endif  // EMOALIGN_DECODER_H_
