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

#include "emoalign/decoder.h"

#include <algorithm>
#include <sstream>

namespace emoalign {

namespace {

constexpr std::array<std::string_view, 4> kFillerTokens = {"[pad]", "[unk]",
                                                           "[eos]", "[sep]"};

bool IsReserved(std::string_view w) {
  if (w == kBosToken || w == kEmoToken) return true;
  for (Emotion e : kAllEmotions) {
    if (EmotionName(e) == w) return true;
  }
  return std::find(kFillerTokens.begin(), kFillerTokens.end(), w) !=
         kFillerTokens.end();
}

}  // namespace

Vocab Vocab::Build(std::string_view prompt_text) {
  Vocab v;
  auto add = [&v](std::string_view token) {
    auto [it, inserted] = v.ids_.try_emplace(std::string(token), v.size());
    if (inserted) v.tokens_.emplace_back(token);
    return it->second;
  };
  add(kBosToken);
  add(kEmoToken);
  std::istringstream words{std::string(prompt_text)};
  std::string w;
  while (words >> w) {
    if (IsReserved(w)) {
      throw ValidationError("vocab: prompt word '" + w +
                            "' collides with a reserved token");
    }
    v.prompt_ids_.push_back(add(w));
  }
  if (v.prompt_ids_.empty()) throw ValidationError("vocab: empty prompt");
  for (Emotion e : kAllEmotions) v.emotion_ids_[Code(e)] = add(EmotionName(e));
  for (auto f : kFillerTokens) add(f);
  return v;
}

int Vocab::Id(std::string_view token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) {
    throw ValidationError("vocab: unknown token '" + std::string(token) + "'");
  }
  return it->second;
}

bool Vocab::Contains(std::string_view token) const {
  return ids_.find(token) != ids_.end();
}

void DecoderConfig::Validate() const {
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
    throw ValidationError("decoder: d_model (" + std::to_string(d_model) +
                          ") must be divisible by n_heads (" +
                          std::to_string(n_heads) + ")");
  }
  if (n_layers < 1) throw ValidationError("decoder: n_layers must be >= 1");
  if (ff_mult < 1) throw ValidationError("decoder: ff_mult must be >= 1");
  if (max_length < 3) throw ValidationError("decoder: max_length must be >= 3");
}

Decoder::Decoder(const DecoderConfig& config)
    : config_(config), vocab_(Vocab::Build(config.prompt)) {
  config_.Validate();
  Rng rng(Mix64(config_.init_seed ^ 0xDEC0DE5ULL));
  const int d = config_.d_model;
  params_.token_embedding.resize(vocab_.size(), d);
  for (Eigen::Index i = 0; i < params_.token_embedding.size(); ++i) {
    params_.token_embedding.data()[i] = rng.Uniform(-1.0, 1.0);
  }
  params_.memory_norm = MakeLayerNorm(d);
  for (int l = 0; l < config_.n_layers; ++l) {
    DecoderBlock b;
    b.self_norm = MakeLayerNorm(d);
    b.self_attn = MakeAttention(d, config_.n_heads, rng);
    b.cross_norm = MakeLayerNorm(d);
    b.cross_attn = MakeAttention(d, config_.n_heads, rng);
    b.ffn_norm = MakeLayerNorm(d);
    b.ffn = MakeFeedForward(d, config_.ff_mult * d, rng);
    params_.blocks.push_back(std::move(b));
  }
  params_.final_norm = MakeLayerNorm(d);
  params_.lm_head = MakeLinear(d, vocab_.size(), rng);
  positions_ = SinusoidalPositions(config_.max_length, d);
  checksum_ = Checksum(params_);
}

void Decoder::RestoreParams(DecoderParams params) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> want;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> got;
  VisitTensors(params_, "", [&](const std::string&, const Matrix& t) {
    want.emplace_back(t.rows(), t.cols());
  });
  VisitTensors(params, "", [&](const std::string&, const Matrix& t) {
    got.emplace_back(t.rows(), t.cols());
  });
  if (want != got) throw ValidationError("decoder: parameter shapes do not match config");
  params_ = std::move(params);
  checksum_ = Checksum(params_);
}

AssembledSequence Decoder::Assemble(const Matrix& audio) const {
  if (audio.cols() != config_.d_model) {
    throw ValidationError("decoder: audio slots have width " +
                          std::to_string(audio.cols()) + ", expected " +
                          std::to_string(config_.d_model));
  }
  if (!audio.allFinite()) throw NumericError("decoder: non-finite connector output");
  const auto& prompt = vocab_.prompt_ids();
  const Eigen::Index n_audio = audio.rows();
  const Eigen::Index length = 1 + n_audio + static_cast<Eigen::Index>(prompt.size()) + 1;
  AssembledSequence seq;
  seq.embeddings.resize(length, config_.d_model);
  seq.slots.reserve(length);
  seq.embeddings.row(0) = params_.token_embedding.row(vocab_.bos_id());
  seq.slots.push_back(SlotType::kBos);
  seq.embeddings.middleRows(1, n_audio) = audio;
  seq.slots.insert(seq.slots.end(), n_audio, SlotType::kAudio);
  for (size_t i = 0; i < prompt.size(); ++i) {
    seq.embeddings.row(1 + n_audio + i) = params_.token_embedding.row(prompt[i]);
    seq.slots.push_back(SlotType::kPrompt);
  }
  seq.embeddings.row(length - 1) = params_.token_embedding.row(vocab_.emo_id());
  seq.slots.push_back(SlotType::kEmo);
  seq.audio = audio;
  return seq;
}

Vector Decoder::DecodeLogits(const AssembledSequence& seq, DecoderCache* cache) const {
  const int length = seq.length();
  if (length > config_.max_length) {
    throw ValidationError("decoder: sequence length " + std::to_string(length) +
                          " exceeds max_length " + std::to_string(config_.max_length));
  }
  if (length == 0 || seq.slots.back() != SlotType::kEmo) {
    throw ValidationError("decoder: sequence must end with the [emo] slot");
  }
  const bool retain = cache != nullptr;
  if (retain) {
    cache->valid = false;
    cache->blocks.resize(params_.blocks.size());
    cache->audio_begin = 1;
    cache->audio_count = static_cast<int>(seq.audio.rows());
  }
  Matrix x = seq.embeddings + positions_.topRows(length);
  const Matrix memory =
      Forward(params_.memory_norm, seq.audio, retain ? &cache->memory_norm : nullptr);
  for (size_t l = 0; l < params_.blocks.size(); ++l) {
    const DecoderBlock& b = params_.blocks[l];
    DecoderBlockCache* bc = retain ? &cache->blocks[l] : nullptr;
    const Matrix a = Forward(b.self_norm, x, bc ? &bc->self_norm : nullptr);
    x += Forward(b.self_attn, a, a, /*causal=*/true, bc ? &bc->self_attn : nullptr);
    const Matrix c = Forward(b.cross_norm, x, bc ? &bc->cross_norm : nullptr);
    x += Forward(b.cross_attn, c, memory, false, bc ? &bc->cross_attn : nullptr);
    const Matrix f = Forward(b.ffn_norm, x, bc ? &bc->ffn_norm : nullptr);
    x += Forward(b.ffn, f, bc ? &bc->ffn : nullptr);
  }
  const Matrix last = x.bottomRows(1);
  const Matrix h = Forward(params_.final_norm, last, retain ? &cache->final_norm : nullptr);
  const Matrix logits = Forward(params_.lm_head, h, retain ? &cache->lm_head : nullptr);
  if (retain) cache->valid = true;
  return logits.row(0).transpose();
}

Matrix Decoder::BackwardToAudio(const DecoderCache& cache, const Vector& d_logits) const {
  if (!cache.valid) {
    throw std::logic_error("decoder: backward called without a retained forward pass");
  }
  const Matrix dl = d_logits.transpose();
  const Matrix dh = Backward(params_.lm_head, cache.lm_head, dl, nullptr);
  const Matrix d_last = Backward(params_.final_norm, cache.final_norm, dh, nullptr);
  const Eigen::Index length = cache.blocks.front().self_norm.normalized.rows();
  Matrix dx = Matrix::Zero(length, config_.d_model);
  dx.row(length - 1) = d_last.row(0);
  Matrix d_memory = Matrix::Zero(cache.audio_count, config_.d_model);
  for (size_t i = params_.blocks.size(); i-- > 0;) {
    const DecoderBlock& b = params_.blocks[i];
    const DecoderBlockCache& bc = cache.blocks[i];
    const Matrix df = Backward(b.ffn, bc.ffn, dx, nullptr);
    dx += Backward(b.ffn_norm, bc.ffn_norm, df, nullptr);
    const auto cross = Backward(b.cross_attn, bc.cross_attn, dx, false, nullptr);
    d_memory += cross.memory;
    dx += Backward(b.cross_norm, bc.cross_norm, cross.queries, nullptr);
    const auto self = Backward(b.self_attn, bc.self_attn, dx, true, nullptr);
    dx += Backward(b.self_norm, bc.self_norm, self.queries + self.memory, nullptr);
  }
  Matrix d_audio = dx.middleRows(cache.audio_begin, cache.audio_count);
  d_audio += Backward(params_.memory_norm, cache.memory_norm, d_memory, nullptr);
  return d_audio;
}

AssembledSequence AssembleSequence(const Decoder& decoder, const Linear& adapter,
                                   const Matrix& connector_out) {
  if (adapter.weight.rows() != connector_out.cols() ||
      adapter.weight.cols() != decoder.config().d_model ||
      adapter.bias.cols() != decoder.config().d_model) {
    throw ValidationError("decoder: no dimension adapter from width " +
                          std::to_string(connector_out.cols()) + " to " +
                          std::to_string(decoder.config().d_model));
  }
  return decoder.Assemble(Forward(adapter, connector_out, nullptr));
}

Emotion PredictEmotion(const Vector& logits, const Vocab& vocab,
                       const std::vector<Emotion>& restrict) {
  if (restrict.empty()) throw ValidationError("predict: empty label restriction");
  if (logits.size() != vocab.size()) {
    throw ValidationError("predict: logits do not match the vocabulary");
  }
  std::vector<Emotion> allowed = restrict;
  std::sort(allowed.begin(), allowed.end());
  Emotion best = allowed.front();
  double best_logit = logits(vocab.EmotionTokenId(best));
  for (Emotion e : allowed) {
    const double v = logits(vocab.EmotionTokenId(e));
    if (v > best_logit) {
      best = e;
      best_logit = v;
    }
  }
  return best;
}

std::vector<Emotion> ClassSet(int num_classes) {
  if (num_classes == 4) {
    return {Emotion::kNeutral, Emotion::kHappy, Emotion::kSad, Emotion::kAngry};
  }
  if (num_classes == 7) return {kAllEmotions.begin(), kAllEmotions.end()};
  throw ValidationError("classes must be 4 or 7, got " + std::to_string(num_classes));
}

}  // namespace emoalign
