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

#ifndef EMOALIGN_NN_H_
#define EMOALIGN_NN_H_

// Small dense layers with explicit forward caches and hand-written backward
// passes. Parameters and gradient buffers share one struct type, so a
// gradient buffer always has exactly the shape of its parameter.

#include <concepts>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "emoalign/common.h"
#include "emoalign/rng.h"

namespace emoalign {

struct Linear {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out, or empty for a bias-free projection
};

struct LayerNorm {
  Matrix gain;  // 1 x d
  Matrix bias;  // 1 x d
  static constexpr double kEps = 1e-5;
};

struct FeedForward {
  Linear up;
  Linear down;
};

struct Attention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;
};

struct LinearCache {
  Matrix input;
};

struct LayerNormCache {
  Matrix normalized;
  Vector inv_std;
};

struct FeedForwardCache {
  LinearCache up;
  Matrix pre_activation;
  LinearCache down;
};

struct AttentionCache {
  LinearCache query;
  LinearCache key;
  LinearCache value;
  LinearCache output;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // one (queries x keys) matrix per head
};

// Weights ~ U(-1/sqrt(in), 1/sqrt(in)); biases zero.
// `bias = false` leaves an empty bias tensor, which is skipped everywhere.
Linear MakeLinear(int in, int out, Rng& rng, bool bias = true);
LayerNorm MakeLayerNorm(int dim);
FeedForward MakeFeedForward(int dim, int hidden, Rng& rng);
Attention MakeAttention(int dim, int heads, Rng& rng);

Matrix Forward(const Linear& m, const Matrix& x, LinearCache* cache);
Matrix Forward(const LayerNorm& m, const Matrix& x, LayerNormCache* cache);
Matrix Forward(const FeedForward& m, const Matrix& x, FeedForwardCache* cache);
// Multi-head scaled dot-product attention of `queries` over `memory`. With
// causal=true, query row i only sees memory rows <= i.
Matrix Forward(const Attention& m, const Matrix& queries, const Matrix& memory,
               bool causal, AttentionCache* cache);

// Backward passes return the input gradient. Parameter gradients are
// accumulated into `grad` when it is non-null; frozen modules pass nullptr.
Matrix Backward(const Linear& m, const LinearCache& cache, const Matrix& dy,
                Linear* grad);
Matrix Backward(const LayerNorm& m, const LayerNormCache& cache,
                const Matrix& dy, LayerNorm* grad);
Matrix Backward(const FeedForward& m, const FeedForwardCache& cache,
                const Matrix& dy, FeedForward* grad);

struct AttentionInputGrads {
  Matrix queries;
  Matrix memory;
};
AttentionInputGrads Backward(const Attention& m, const AttentionCache& cache,
                             const Matrix& dy, bool causal, Attention* grad);

double Gelu(double x);
double GeluDerivative(double x);

// Standard sin/cos table, length x dim.
Matrix SinusoidalPositions(int length, int dim);

// Tensor visitation. `f(name, tensor)` sees every parameter in a fixed,
// documented order; the same order is used for checksums, checkpoints,
// optimizer state and gradient checks.
template <typename M, typename T>
concept ModuleOf = std::same_as<std::remove_cvref_t<M>, T>;

template <typename M, typename F>
  requires ModuleOf<M, Linear>
void VisitTensors(M&& m, const std::string& prefix, F&& f) {
  f(prefix + ".weight", m.weight);
  if (m.bias.size() > 0) f(prefix + ".bias", m.bias);
}

template <typename M, typename F>
  requires ModuleOf<M, LayerNorm>
void VisitTensors(M&& m, const std::string& prefix, F&& f) {
  f(prefix + ".gain", m.gain);
  f(prefix + ".bias", m.bias);
}

template <typename M, typename F>
  requires ModuleOf<M, FeedForward>
void VisitTensors(M&& m, const std::string& prefix, F&& f) {
  VisitTensors(m.up, prefix + ".up", f);
  VisitTensors(m.down, prefix + ".down", f);
}

template <typename M, typename F>
  requires ModuleOf<M, Attention>
void VisitTensors(M&& m, const std::string& prefix, F&& f) {
  VisitTensors(m.query, prefix + ".query", f);
  VisitTensors(m.key, prefix + ".key", f);
  VisitTensors(m.value, prefix + ".value", f);
  VisitTensors(m.output, prefix + ".output", f);
}

// Same structure, every tensor zeroed.
template <typename M>
M ZerosLike(const M& m) {
  M out = m;
  VisitTensors(out, "", [](const std::string&, Matrix& t) { t.setZero(); });
  return out;
}

// FNV-1a over tensor names, shapes and raw IEEE-754 bytes.
class TensorDigest {
 public:
  void Add(const std::string& name, const Matrix& t);
  uint64_t value() const { return hash_; }

 private:
  void AddBytes(const void* data, size_t n);
  uint64_t hash_ = 0xCBF29CE484222325ULL;
};

template <typename M>
uint64_t Checksum(const M& m) {
  TensorDigest digest;
  VisitTensors(m, "", [&](const std::string& name, const Matrix& t) {
    digest.Add(name, t);
  });
  return digest.value();
}

}  // namespace emoalign

#endif  // EMOALIGN_NN_H_
