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

#include "emoalign/qformer.h"

#include <stdexcept>

namespace emoalign {

void QFormerConfig::Validate() const {
  if (n_queries < 1) throw ValidationError("qformer: n_queries must be >= 1");
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
    throw ValidationError("qformer: d_model (" + std::to_string(d_model) +
                          ") must be divisible by n_heads (" +
                          std::to_string(n_heads) + ")");
  }
  if (n_layers < 1) throw ValidationError("qformer: n_layers must be >= 1");
  if (ff_mult < 1) throw ValidationError("qformer: ff_mult must be >= 1");
  if (d_encoder < 1 || d_decoder < 1) {
    throw ValidationError("qformer: encoder/decoder widths must be >= 1");
  }
}

QFormerState InitQFormer(const QFormerConfig& config, uint64_t seed) {
  config.Validate();
  Rng rng(Mix64(seed ^ 0x51F0A3E5ULL));
  QFormerState s;
  s.config = config;
  QFormerParams& p = s.params;
  p.queries.resize(config.n_queries, config.d_model);
  for (Eigen::Index i = 0; i < p.queries.size(); ++i) {
    p.queries.data()[i] = rng.Uniform(-1.0, 1.0);
  }
  p.feature_adapter = MakeLinear(config.d_encoder, config.d_model, rng);
  p.memory_norm = MakeLayerNorm(config.d_model);
  for (int l = 0; l < config.n_layers; ++l) {
    QFormerLayer layer;
    layer.self_norm = MakeLayerNorm(config.d_model);
    layer.self_attn = MakeAttention(config.d_model, config.n_heads, rng);
    layer.cross_norm = MakeLayerNorm(config.d_model);
    layer.cross_attn = MakeAttention(config.d_model, config.n_heads, rng);
    layer.ffn_norm = MakeLayerNorm(config.d_model);
    layer.ffn = MakeFeedForward(config.d_model, config.ff_mult * config.d_model, rng);
    p.layers.push_back(std::move(layer));
  }
  p.output_norm = MakeLayerNorm(config.d_model);
  p.decoder_proj = MakeLinear(config.d_model, config.d_decoder, rng);
  s.grads = ZerosLike(p);
  return s;
}

Matrix QFormerForward(const QFormerParams& params, const Matrix& features,
                      QFormerCache* cache) {
  if (features.rows() == 0) throw ValidationError("qformer: empty feature matrix");
  if (features.cols() != params.feature_adapter.weight.rows()) {
    throw ValidationError("qformer: feature width " +
                          std::to_string(features.cols()) + " != " +
                          std::to_string(params.feature_adapter.weight.rows()));
  }
  const bool retain = cache != nullptr;
  if (retain) {
    cache->valid = false;
    cache->layers.resize(params.layers.size());
  }
  const Matrix adapted =
      Forward(params.feature_adapter, features, retain ? &cache->feature_adapter : nullptr);
  Matrix memory =
      Forward(params.memory_norm, adapted, retain ? &cache->memory_norm : nullptr);

  Matrix q = params.queries;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const QFormerLayer& layer = params.layers[l];
    QFormerLayerCache* lc = retain ? &cache->layers[l] : nullptr;
    const Matrix a = Forward(layer.self_norm, q, lc ? &lc->self_norm : nullptr);
    q += Forward(layer.self_attn, a, a, false, lc ? &lc->self_attn : nullptr);
    const Matrix c = Forward(layer.cross_norm, q, lc ? &lc->cross_norm : nullptr);
    q += Forward(layer.cross_attn, c, memory, false, lc ? &lc->cross_attn : nullptr);
    const Matrix f = Forward(layer.ffn_norm, q, lc ? &lc->ffn_norm : nullptr);
    q += Forward(layer.ffn, f, lc ? &lc->ffn : nullptr);
  }
  Matrix out = Forward(params.output_norm, q, retain ? &cache->output_norm : nullptr);
  if (retain) {
    cache->memory = std::move(memory);
    cache->valid = true;
  }
  return out;
}

void QFormerBackward(const QFormerParams& params, const QFormerCache& cache,
                     const Matrix& d_output, QFormerParams* grads) {
  if (!cache.valid) {
    throw std::logic_error("qformer: backward called without a retained forward pass");
  }
  Matrix dq = Backward(params.output_norm, cache.output_norm, d_output,
                       grads ? &grads->output_norm : nullptr);
  Matrix d_memory = Matrix::Zero(cache.memory.rows(), cache.memory.cols());
  for (size_t i = params.layers.size(); i-- > 0;) {
    const QFormerLayer& layer = params.layers[i];
    const QFormerLayerCache& lc = cache.layers[i];
    QFormerLayer* g = grads ? &grads->layers[i] : nullptr;

    const Matrix df = Backward(layer.ffn, lc.ffn, dq, g ? &g->ffn : nullptr);
    dq += Backward(layer.ffn_norm, lc.ffn_norm, df, g ? &g->ffn_norm : nullptr);

    const auto cross = Backward(layer.cross_attn, lc.cross_attn, dq, false,
                                g ? &g->cross_attn : nullptr);
    d_memory += cross.memory;
    dq += Backward(layer.cross_norm, lc.cross_norm, cross.queries,
                   g ? &g->cross_norm : nullptr);

    const auto self = Backward(layer.self_attn, lc.self_attn, dq, false,
                               g ? &g->self_attn : nullptr);
    dq += Backward(layer.self_norm, lc.self_norm, self.queries + self.memory,
                   g ? &g->self_norm : nullptr);
  }
  if (grads == nullptr) return;
  grads->queries += dq;
  const Matrix d_adapted = Backward(params.memory_norm, cache.memory_norm, d_memory,
                                    &grads->memory_norm);
  Backward(params.feature_adapter, cache.feature_adapter, d_adapted,
           &grads->feature_adapter);
}

PooledEmbedding PoolQueries(const Matrix& query_output) {
  if (query_output.rows() == 0) throw ValidationError("pool: no queries");
  if (!query_output.allFinite()) throw NumericError("pool: non-finite query output");
  PooledEmbedding p;
  const Vector mean = query_output.colwise().mean().transpose();
  p.norm = mean.norm();
  if (!(p.norm > 1e-12)) {
    throw NumericError("pool: mean query vector is zero; cannot normalize");
  }
  p.unit = mean / p.norm;
  return p;
}

Matrix PoolQueriesBackward(const PooledEmbedding& pooled, int n_queries,
                           const Vector& d_unit) {
  const Vector d_mean =
      (d_unit - pooled.unit * pooled.unit.dot(d_unit)) / pooled.norm;
  Matrix d(n_queries, d_mean.size());
  d.rowwise() = d_mean.transpose() / static_cast<double>(n_queries);
  return d;
}

Matrix ProjectToDecoder(const QFormerParams& params, const Matrix& query_output,
                        LinearCache* cache) {
  return Forward(params.decoder_proj, query_output, cache);
}

void ZeroGrads(QFormerState& state) {
  VisitTensors(state.grads, "", [](const std::string&, Matrix& t) { t.setZero(); });
}

uint64_t ParamChecksum(const QFormerParams& params) { return Checksum(params); }

}  // namespace emoalign
