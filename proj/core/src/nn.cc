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

#include "emoalign/nn.h"

#include <cmath>
#include <limits>
#include <numbers>

namespace emoalign {

Linear MakeLinear(int in, int out, Rng& rng, bool bias) {
  Linear m;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  m.weight.resize(in, out);
  for (Eigen::Index i = 0; i < m.weight.size(); ++i) {
    m.weight.data()[i] = rng.Uniform(-bound, bound);
  }
  m.bias = bias ? Matrix::Zero(1, out) : Matrix();
  return m;
}

LayerNorm MakeLayerNorm(int dim) {
  return LayerNorm{Matrix::Ones(1, dim), Matrix::Zero(1, dim)};
}

FeedForward MakeFeedForward(int dim, int hidden, Rng& rng) {
  FeedForward m;
  m.up = MakeLinear(dim, hidden, rng);
  m.down = MakeLinear(hidden, dim, rng);
  return m;
}

Attention MakeAttention(int dim, int heads, Rng& rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw ValidationError("attention width " + std::to_string(dim) +
                          " is not divisible by " + std::to_string(heads) +
                          " heads");
  }
  Attention m;
  m.query = MakeLinear(dim, dim, rng);
  // Key bias only shifts every score of a query equally; softmax ignores it.
  m.key = MakeLinear(dim, dim, rng, /*bias=*/false);
  m.value = MakeLinear(dim, dim, rng);
  m.output = MakeLinear(dim, dim, rng);
  m.heads = heads;
  return m;
}

Matrix Forward(const Linear& m, const Matrix& x, LinearCache* cache) {
  if (cache != nullptr) cache->input = x;
  Matrix y = x * m.weight;
  if (m.bias.size() > 0) y.rowwise() += m.bias.row(0);
  return y;
}

Matrix Backward(const Linear& m, const LinearCache& cache, const Matrix& dy,
                Linear* grad) {
  if (grad != nullptr) {
    grad->weight.noalias() += cache.input.transpose() * dy;
    if (grad->bias.size() > 0) grad->bias += dy.colwise().sum();
  }
  return dy * m.weight.transpose();
}

Matrix Forward(const LayerNorm& m, const Matrix& x, LayerNormCache* cache) {
  const Eigen::Index rows = x.rows();
  const double inv_d = 1.0 / static_cast<double>(x.cols());
  Matrix normalized(rows, x.cols());
  Vector inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() * inv_d;
    const auto centered = x.row(r).array() - mean;
    const double var = centered.square().sum() * inv_d;
    inv_std(r) = 1.0 / std::sqrt(var + LayerNorm::kEps);
    normalized.row(r) = centered * inv_std(r);
  }
  Matrix y = normalized.array().rowwise() * m.gain.row(0).array();
  y.rowwise() += m.bias.row(0);
  if (cache != nullptr) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix Backward(const LayerNorm& m, const LayerNormCache& cache,
                const Matrix& dy, LayerNorm* grad) {
  const Matrix& xhat = cache.normalized;
  if (grad != nullptr) {
    grad->gain += (dy.array() * xhat.array()).colwise().sum().matrix();
    if (grad->bias.size() > 0) grad->bias += dy.colwise().sum();
  }
  const double inv_d = 1.0 / static_cast<double>(dy.cols());
  Matrix dxhat = dy.array().rowwise() * m.gain.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() * inv_d;
    const double mean_dx = dxhat.row(r).dot(xhat.row(r)) * inv_d;
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
  }
  return dx;
}

double Gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double GeluDerivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix Forward(const FeedForward& m, const Matrix& x, FeedForwardCache* cache) {
  Matrix pre = Forward(m.up, x, cache ? &cache->up : nullptr);
  Matrix act = pre.unaryExpr(&Gelu);
  if (cache != nullptr) cache->pre_activation = std::move(pre);
  return Forward(m.down, act, cache ? &cache->down : nullptr);
}

Matrix Backward(const FeedForward& m, const FeedForwardCache& cache,
                const Matrix& dy, FeedForward* grad) {
  Matrix dact = Backward(m.down, cache.down, dy, grad ? &grad->down : nullptr);
  Matrix dpre =
      dact.array() * cache.pre_activation.unaryExpr(&GeluDerivative).array();
  return Backward(m.up, cache.up, dpre, grad ? &grad->up : nullptr);
}

namespace {

void SoftmaxRowsInPlace(Matrix& s, bool causal) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const Eigen::Index visible = causal ? std::min<Eigen::Index>(r + 1, s.cols())
                                        : s.cols();
    auto row = s.row(r);
    const double max = row.head(visible).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < visible; ++c) {
      row(c) = std::exp(row(c) - max);
      total += row(c);
    }
    row.head(visible) /= total;
    for (Eigen::Index c = visible; c < s.cols(); ++c) row(c) = 0.0;
  }
}

}  // namespace

Matrix Forward(const Attention& m, const Matrix& queries, const Matrix& memory,
               bool causal, AttentionCache* cache) {
  AttentionCache local;
  AttentionCache& c = cache != nullptr ? *cache : local;
  c.q = Forward(m.query, queries, &c.query);
  c.k = Forward(m.key, memory, &c.key);
  c.v = Forward(m.value, memory, &c.value);
  const Eigen::Index dim = c.q.cols();
  const Eigen::Index head_dim = dim / m.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Matrix mixed(queries.rows(), dim);
  c.probs.resize(m.heads);
  for (int h = 0; h < m.heads; ++h) {
    const Eigen::Index off = h * head_dim;
    Matrix scores = (c.q.middleCols(off, head_dim) *
                     c.k.middleCols(off, head_dim).transpose()) *
                    scale;
    SoftmaxRowsInPlace(scores, causal);
    mixed.middleCols(off, head_dim).noalias() =
        scores * c.v.middleCols(off, head_dim);
    c.probs[h] = std::move(scores);
  }
  return Forward(m.output, mixed, &c.output);
}

AttentionInputGrads Backward(const Attention& m, const AttentionCache& c,
                             const Matrix& dy, bool /*causal*/,
                             Attention* grad) {
  // Masked probabilities are exactly zero, so the softmax Jacobian below
  // already yields zero gradient for masked scores.
  Matrix dmixed = Backward(m.output, c.output, dy, grad ? &grad->output : nullptr);
  const Eigen::Index dim = c.q.cols();
  const Eigen::Index head_dim = dim / m.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Matrix dq = Matrix::Zero(c.q.rows(), dim);
  Matrix dk = Matrix::Zero(c.k.rows(), dim);
  Matrix dv = Matrix::Zero(c.v.rows(), dim);
  for (int h = 0; h < m.heads; ++h) {
    const Eigen::Index off = h * head_dim;
    const Matrix& p = c.probs[h];
    const auto dout = dmixed.middleCols(off, head_dim);
    Matrix dp = dout * c.v.middleCols(off, head_dim).transpose();
    dv.middleCols(off, head_dim).noalias() = p.transpose() * dout;
    const Vector row_dot = (dp.array() * p.array()).rowwise().sum();
    Matrix ds = p.array() * (dp.colwise() - row_dot).array();
    ds *= scale;
    dq.middleCols(off, head_dim).noalias() = ds * c.k.middleCols(off, head_dim);
    dk.middleCols(off, head_dim).noalias() =
        ds.transpose() * c.q.middleCols(off, head_dim);
  }
  AttentionInputGrads out;
  out.queries = Backward(m.query, c.query, dq, grad ? &grad->query : nullptr);
  out.memory = Backward(m.key, c.key, dk, grad ? &grad->key : nullptr);
  out.memory += Backward(m.value, c.value, dv, grad ? &grad->value : nullptr);
  return out;
}

Matrix SinusoidalPositions(int length, int dim) {
  Matrix pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim; ++i) {
      const int pair = i / 2;
      const double freq =
          std::pow(10000.0, -2.0 * pair / static_cast<double>(dim));
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  }
  return pe;
}

void TensorDigest::AddBytes(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    hash_ ^= p[i];
    hash_ *= 0x100000001B3ULL;
  }
}

void TensorDigest::Add(const std::string& name, const Matrix& t) {
  AddBytes(name.data(), name.size());
  const int64_t shape[2] = {t.rows(), t.cols()};
  AddBytes(shape, sizeof(shape));
  AddBytes(t.data(), sizeof(double) * static_cast<size_t>(t.size()));
}

}  // namespace emoalign
