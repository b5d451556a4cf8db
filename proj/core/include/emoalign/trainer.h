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

#ifndef EMOALIGN_TRAINER_H_
#define EMOALIGN_TRAINER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emoalign/corpus.h"
#include "emoalign/losses.h"
#include "emoalign/pipeline.h"
#include "emoalign/qformer.h"

namespace emoalign {

// Which manifest rows a stage trains on. An empty language list accepts any
// language.
struct StageFilter {
  std::optional<bool> synthetic;
  std::vector<std::string> languages;

  bool Accepts(const Utterance& u) const;
};

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-6;
  double clip_norm = 5.0;  // <= 0 disables clipping
  int batch_size = 14;
  int steps = 200;
  uint64_t seed = 7;
  bool use_contrastive = true;
  bool two_stage = true;
  StageFilter stage1{false, {"en"}};
  StageFilter stage2{true, {}};
  // Languages removed from every training stage (zero-shot evaluation).
  std::vector<std::string> exclude_languages;
  int eval_every = 0;  // 0 disables periodic evaluation
  int threads = 1;
  LossConfig loss;

  void Validate() const;
};

struct AdamState {
  QFormerParams m;
  QFormerParams v;
  int64_t t = 0;
};

AdamState InitAdam(const QFormerParams& params);

// One AdamW step with decoupled weight decay:
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
void AdamWUpdate(QFormerParams& params, const QFormerParams& grads,
                 AdamState& state, const TrainConfig& config);

// Scales grads in place so the global L2 norm is at most max_norm. Returns the
// norm before clipping.
double ClipGradNorm(QFormerParams& grads, double max_norm);

struct BatchLoss {
  double lec = 0.0;
  double ce = 0.0;  // mean over the batch
  double total = 0.0;
  int active_hinges = 0;
  Matrix embeddings;  // b x d_model pooled unit vectors
};

// Forward over a batch; when `grads` is non-null, backpropagates the total
// loss into the connector's gradient buffers (accumulating).
//   total = [use_contrastive] * lec + lambda * mean(ce)
BatchLoss ComputeBatchLoss(const Models& models,
                           std::span<const Matrix* const> features,
                           std::span<const int> labels, const LossConfig& loss,
                           bool use_contrastive, QFormerParams* grads);

struct StepLog {
  int64_t step = 0;
  double lec = 0.0;
  double ce = 0.0;
  double total = 0.0;
};

// Zeroes grads, runs ComputeBatchLoss with backward, clips and applies one
// AdamW update to the connector. Throws NumericError on a non-finite loss and
// std::logic_error if a frozen module's digest changed.
StepLog TrainStep(Models& models, AdamState& adam,
                  std::span<const Matrix* const> features,
                  std::span<const int> labels, const TrainConfig& config,
                  int64_t step);

struct BatchPlan {
  std::vector<std::vector<size_t>> batches;  // indices into the label pool
  // Set when the pool holds a single label: no contrastive negatives exist.
  bool single_label = false;
};

// Emotion-stratified sampler: each batch cycles through a shuffled label
// order, drawing from per-label shuffled queues, so every batch holds at
// least two labels whenever the pool does. Deterministic in `seed`.
BatchPlan MakeBatches(std::span<const int> labels, int batch_size,
                      int num_batches, uint64_t seed);

// Model plus optimizer and bookkeeping; what a checkpoint stores.
struct TrainingState {
  explicit TrainingState(const ModelConfig& config)
      : models(config), adam(InitAdam(models.qformer.params)) {}

  Models models;
  AdamState adam;
  int stage = 0;  // last completed stage
  int64_t step = 0;
  uint64_t seed = 0;
  std::vector<std::string> seen_datasets;   // sorted
  std::vector<std::string> seen_languages;  // sorted
  std::string config_json;                  // resolved run config echo
};

struct EvalPoint {
  int64_t step = 0;
  double wa = 0.0;
  double ua = 0.0;
};

struct StageResult {
  TrainingState state;
  std::vector<StepLog> log;
  std::vector<EvalPoint> evals;
};

// Row indices of `manifest` used by `stage` (stage filter minus excluded
// languages), in manifest order.
std::vector<size_t> SelectStageRows(const Manifest& manifest, int stage,
                                    const TrainConfig& config);

// Scores the current connector on held-out data; called every
// config.eval_every steps.
using EvalHook = std::function<EvalPoint(const Models&)>;

// Runs config.steps steps of the given stage starting from `init`. `bank`
// must be parallel to `manifest`. Stage 2 with config.two_stage requires a
// stage-1 state.
StageResult TrainStage(int stage, const Manifest& manifest,
                       const FeatureBank& bank, const TrainConfig& config,
                       TrainingState init, const EvalHook& eval_hook = {});

std::string StepLogToJsonl(const std::vector<StepLog>& log);

struct GradCheckEntry {
  std::string tensor;
  int64_t size = 0;
  double max_abs_analytic = 0.0;
  double max_abs_error = 0.0;
  // max |analytic - numeric| / max(max |analytic|, max |numeric|); 0 when
  // both gradients vanish (below 1e-12).
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::string label;
  double loss = 0.0;
  int active_hinges = 0;
  int negative_pairs = 0;
  // Smallest |S_ij - m| over different-label pairs; central differences are
  // only meaningful when this exceeds the perturbation's effect on S.
  double min_hinge_gap = 0.0;
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Central differences on every connector tensor entry against the analytic
// gradient of the total batch loss. Throws ValidationError if eps <= 0.
GradCheckReport GradCheck(const Models& models,
                          std::span<const Matrix* const> features,
                          std::span<const int> labels, const LossConfig& loss,
                          bool use_contrastive, double eps, double tol);

struct GradCheckSuiteResult {
  std::vector<GradCheckReport> reports;
  bool passed = false;
  double seconds = 0.0;

  std::string ToJson() const;
};

// The tiny seeded configuration (b=4, T=16, d_model=16, n_queries=4) checked
// under stage-1 and stage-2 batches with all-active, all-inactive and mixed
// hinge terms, plus a pure-decoding variant.
GradCheckSuiteResult RunGradCheckSuite(double eps = 1e-5, double tol = 1e-6,
                                       uint64_t seed = 5);

}  // namespace emoalign

#endif  // EMOALIGN_TRAINER_H_
