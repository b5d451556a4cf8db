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

#ifndef EMOALIGN_QFORMER_H_
#define EMOALIGN_QFORMER_H_

#include <cstdint>
#include <string>
#include <vector>

#include "emoalign/nn.h"

namespace emoalign {

struct QFormerConfig {
  int n_queries = 8;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ff_mult = 4;
  int d_encoder = 64;  // width of incoming encoder features
  int d_decoder = 64;  // width of the decoder's audio slots

  void Validate() const;
};

struct QFormerLayer {
  LayerNorm self_norm;
  Attention self_attn;
  LayerNorm cross_norm;
  Attention cross_attn;
  LayerNorm ffn_norm;
  FeedForward ffn;
};

template <typename M, typename F>
  requires ModuleOf<M, QFormerLayer>
void VisitTensors(M&& m, const std::string& prefix, F&& f) {
  VisitTensors(m.self_norm, prefix + ".self_norm", f);
  VisitTensors(m.self_attn, prefix + ".self_attn", f);
  VisitTensors(m.cross_norm, prefix + ".cross_norm", f);
  VisitTensors(m.cross_attn, prefix + ".cross_attn", f);
  VisitTensors(m.ffn_norm, prefix + ".ffn_norm", f);
  VisitTensors(m.ffn, prefix + ".ffn", f);
}

// Every trainable tensor of the connector. The same struct doubles as the
// gradient buffer.
struct QFormerParams {
  Matrix queries;        // n_queries x d_model
  Linear feature_adapter;  // d_encoder -> d_model
  LayerNorm memory_norm;
  std::vector<QFormerLayer> layers;
  LayerNorm output_norm;
  Linear decoder_proj;  // d_model -> d_decoder, feeds the audio slots
};

template <typename M, typename F>
  requires ModuleOf<M, QFormerParams>
void VisitTensors(M&& m, const std::string& prefix, F&& f) {
  f(prefix + ".queries", m.queries);
  VisitTensors(m.feature_adapter, prefix + ".feature_adapter", f);
  VisitTensors(m.memory_norm, prefix + ".memory_norm", f);
  for (size_t i = 0; i < m.layers.size(); ++i) {
    VisitTensors(m.layers[i], prefix + ".layers." + std::to_string(i), f);
  }
  VisitTensors(m.output_norm, prefix + ".output_norm", f);
  VisitTensors(m.decoder_proj, prefix + ".decoder_proj", f);
}

struct QFormerLayerCache {
  LayerNormCache self_norm;
  AttentionCache self_attn;
  LayerNormCache cross_norm;
  AttentionCache cross_attn;
  LayerNormCache ffn_norm;
  FeedForwardCache ffn;
};

// Activations retained by a training-mode forward pass.
struct QFormerCache {
  LinearCache feature_adapter;
  LayerNormCache memory_norm;
  Matrix memory;
  std::vector<QFormerLayerCache> layers;
  LayerNormCache output_norm;
  bool valid = false;
};

struct QFormerState {
  QFormerConfig config;
  QFormerParams params;
  QFormerParams grads;
};

QFormerState InitQFormer(const QFormerConfig& config, uint64_t seed);

// Learnable queries attend to `features` (T x d_encoder, T >= 1) and return
// n_queries x d_model, independent of T. Pass a cache to retain activations
// for Backward; a null cache is a read-only inference pass.
Matrix QFormerForward(const QFormerParams& params, const Matrix& features,
                      QFormerCache* cache);

// Accumulates parameter gradients for upstream d_output (n_queries x d_model).
// Throws std::logic_error if `cache` does not hold a forward pass.
void QFormerBackward(const QFormerParams& params, const QFormerCache& cache,
                     const Matrix& d_output, QFormerParams* grads);

// Mean over queries, then L2-normalized. Throws NumericError when the mean
// is (numerically) the zero vector.
struct PooledEmbedding {
  Vector unit;
  double norm = 0.0;  // norm of the pre-normalization mean
};
PooledEmbedding PoolQueries(const Matrix& query_output);

// Gradient of a scalar w.r.t. query_output given its gradient w.r.t. the
// pooled unit vector.
Matrix PoolQueriesBackward(const PooledEmbedding& pooled, int n_queries,
                           const Vector& d_unit);

// Audio slots for the decoder: decoder_proj applied to the query output.
Matrix ProjectToDecoder(const QFormerParams& params, const Matrix& query_output,
                        LinearCache* cache);

void ZeroGrads(QFormerState& state);
uint64_t ParamChecksum(const QFormerParams& params);

}  // namespace emoalign

#endif  // EMOALIGN_QFORMER_H_
