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

#ifndef EMOALIGN_LOSSES_H_
#define EMOALIGN_LOSSES_H_

#include <span>
#include <vector>

#include "emoalign/common.h"

namespace emoalign {

enum class PairReduction { kSum, kMean };

struct LossConfig {
  double w1 = 1.0;      // weight on same-label pairs
  double w2 = 1.0;      // weight on different-label pairs
  double margin = 0.2;  // hinge margin on cosine similarity
  double lambda = 1.0;  // weight of the decoding cross-entropy
  // kSum is the plain double sum over ordered pairs; kMean divides by b^2.
  PairReduction reduction = PairReduction::kSum;

  void Validate() const;
};

// dot(a, b) / (|a| |b|), clamped to [-1, 1]. Throws on a zero vector.
double CosineSimilarity(const Vector& a, const Vector& b);

struct ContrastiveResult {
  double loss = 0.0;
  Matrix grad;  // b x d, d loss / d embeddings
  int active_hinges = 0;
};

// Emotion-aware contrastive loss over all ordered pairs (i, j), self-pairs
// included:
//   sum_ij  w1 * y_ij * (1 - S_ij) + w2 * (1 - y_ij) * max(0, S_ij - m)
// with S_ij = <e_i, e_j> and y_ij = [label_i == label_j]. Rows must be unit
// vectors (1e-6 tolerance). The hinge subgradient at S == m is zero.
ContrastiveResult ContrastiveLoss(const Matrix& embeddings,
                                  std::span<const int> labels,
                                  const LossConfig& config);

// Same objective without the unit-norm check; S_ij is the raw dot product.
ContrastiveResult ContrastiveLossUnchecked(const Matrix& embeddings,
                                           std::span<const int> labels,
                                           const LossConfig& config);

struct CrossEntropyResult {
  double loss = 0.0;
  Vector grad;  // d loss / d logits
};

// -log softmax(logits)[target].
CrossEntropyResult CrossEntropy(const Vector& logits, int target);

// lec + lambda * ce; the same form serves both training stages.
double StageLoss(double lec, double ce, const LossConfig& config);

}  // namespace emoalign

#endif  // EMOALIGN_LOSSES_H_
