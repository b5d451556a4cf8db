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

#include "emoalign/losses.h"

#include <algorithm>
#include <cmath>

namespace emoalign {

void LossConfig::Validate() const {
  if (!(w1 > 0) || !(w2 > 0)) throw ValidationError("loss: w1 and w2 must be > 0");
  if (!(margin >= -1.0 && margin <= 1.0)) {
    throw ValidationError("loss: margin must lie in [-1, 1]");
  }
  if (!(lambda >= 0)) throw ValidationError("loss: lambda must be >= 0");
}

double CosineSimilarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ValidationError("cosine: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine: zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

ContrastiveResult ContrastiveLossUnchecked(const Matrix& embeddings,
                                           std::span<const int> labels,
                                           const LossConfig& config) {
  const Eigen::Index b = embeddings.rows();
  if (b < 1) throw ValidationError("contrastive: empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != b) {
    throw ValidationError("contrastive: label count does not match batch");
  }
  const Matrix sim = embeddings * embeddings.transpose();
  // dL/dS for every ordered pair.
  Matrix d_sim = Matrix::Zero(b, b);
  ContrastiveResult r;
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      const double s = sim(i, j);
      if (labels[i] == labels[j]) {
        r.loss += config.w1 * (1.0 - s);
        d_sim(i, j) = -config.w1;
      } else if (s > config.margin) {
        r.loss += config.w2 * (s - config.margin);
        d_sim(i, j) = config.w2;
        ++r.active_hinges;
      }
    }
  }
  r.grad = (d_sim + d_sim.transpose()) * embeddings;
  if (config.reduction == PairReduction::kMean) {
    const double scale = 1.0 / static_cast<double>(b * b);
    r.loss *= scale;
    r.grad *= scale;
  }
  return r;
}

ContrastiveResult ContrastiveLoss(const Matrix& embeddings,
                                  std::span<const int> labels,
                                  const LossConfig& config) {
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    const double n = embeddings.row(i).norm();
    if (!(std::abs(n - 1.0) <= 1e-6)) {
      throw ValidationError("contrastive: row " + std::to_string(i) +
                            " is not unit norm (" + std::to_string(n) + ")");
    }
  }
  return ContrastiveLossUnchecked(embeddings, labels, config);
}

CrossEntropyResult CrossEntropy(const Vector& logits, int target) {
  if (target < 0 || target >= logits.size()) {
    throw ValidationError("cross-entropy: target " + std::to_string(target) +
                          " out of range for " + std::to_string(logits.size()) +
                          " classes");
  }
  const double max = logits.maxCoeff();
  const Vector shifted = logits.array() - max;
  const double log_z = std::log(shifted.array().exp().sum());
  CrossEntropyResult r;
  r.loss = log_z - shifted(target);
  r.grad = (shifted.array() - log_z).exp();
  r.grad(target) -= 1.0;
  return r;
}

double StageLoss(double lec, double ce, const LossConfig& config) {
  return lec + config.lambda * ce;
}

}  // namespace emoalign
