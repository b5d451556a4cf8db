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

#ifndef EMOALIGN_EVAL_H_
#define EMOALIGN_EVAL_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emoalign/config.h"
#include "emoalign/corpus.h"
#include "emoalign/pipeline.h"
#include "emoalign/trainer.h"

namespace emoalign {

// Rows are gold labels, columns predictions, both ordered by label code over
// the active class set.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<Emotion> classes);

  int k() const { return static_cast<int>(classes_.size()); }
  const std::vector<Emotion>& classes() const { return classes_; }
  int64_t at(int gold, int pred) const { return counts_[gold * k() + pred]; }
  int64_t& at(int gold, int pred) { return counts_[gold * k() + pred]; }
  int64_t total() const;
  // Index of a label in the class set, or -1.
  int IndexOf(Emotion e) const;
  void Add(Emotion gold, Emotion pred);

 private:
  std::vector<Emotion> classes_;
  std::vector<int64_t> counts_;
};

struct MetricsReport {
  double wa = 0.0;
  double ua = 0.0;
  double wf1 = 0.0;
  double precision = 0.0;
  ConfusionMatrix confusion{{}};
  std::string dataset;   // "*" for pooled reports
  std::string language;  // "*" for pooled reports
  int64_t n = 0;
  bool zero_shot = false;
};

// WA = trace/total. UA = mean recall over classes with support. WF1 and
// precision are support-weighted; per-class precision is 0 for an empty
// column and F1 is 0 when precision and recall are both 0.
MetricsReport ComputeMetrics(const ConfusionMatrix& cm);

struct Prediction {
  std::string id;
  Emotion gold = Emotion::kNeutral;
  Emotion pred = Emotion::kNeutral;
  std::vector<double> logits;  // over the class set, in class order
};

struct EvaluationResult {
  std::vector<MetricsReport> groups;  // sorted by (dataset, language)
  MetricsReport pooled;
  std::vector<Prediction> predictions;  // manifest order
  int64_t skipped = 0;  // gold label outside the class set

  // {config, seed, classes, skipped, pooled, groups: [...]}
  std::string ToJson(const std::string& config_json, uint64_t seed) const;
  std::string PredictionsJsonl() const;
};

// Runs connector + decoder over precomputed features (parallel to
// `manifest`) and scores the restricted emotion words. A group is zero-shot
// when its dataset never appeared in training.
EvaluationResult Evaluate(const Models& models, const Manifest& manifest,
                          const FeatureBank& bank,
                          const std::vector<Emotion>& restrict,
                          const std::vector<std::string>& seen_datasets,
                          int threads = 1);

EvaluationResult Evaluate(const TrainingState& state, const Manifest& manifest,
                          const WaveLoader& loader,
                          const std::vector<Emotion>& restrict,
                          int threads = 1);

// Pooled unit embeddings (n x d_model), one row per manifest entry.
Matrix PooledEmbeddings(const Models& models, const FeatureBank& bank,
                        int threads = 1);

struct Projection {
  Matrix coords;  // n x 2
  double explained[2] = {0.0, 0.0};  // fraction of total variance
};

// Top-2 principal components of the centered data; each component's sign is
// chosen so its largest-magnitude coordinate is positive.
Projection Project2D(const Matrix& embeddings);

// Mean silhouette with cosine distance.
double SilhouetteScore(const Matrix& embeddings, std::span<const int> labels);

enum class AblationCell {
  kSer,          // stage-1 data only
  kSerLec,       // stage-1 data + contrastive
  kMser,         // multilingual synthetic data, single stage
  kMserLec,      // multilingual + contrastive
  kTwoStage,     // stage 1 then stage 2
  kTwoStageLec,  // stage 1 then stage 2, contrastive in both
};
inline constexpr int kNumAblationCells = 6;
std::string_view AblationCellName(AblationCell cell);

struct AblationRow {
  AblationCell cell;
  uint64_t seed = 0;
  MetricsReport metrics;
  double silhouette = 0.0;  // held-out pooled embeddings grouped by emotion
};

struct AblationResult {
  std::vector<AblationRow> rows;  // seed-major, cell order within a seed
  std::vector<double> untrained_silhouette;  // per seed
  std::vector<double> untrained_wa;          // per seed

  double MeanWa(AblationCell cell) const;
  const AblationRow& Row(AblationCell cell, uint64_t seed) const;
  std::string ToJson(const std::string& config_json) const;
};

// Trains every cell for every seed in config.eval.ablation_seeds on the
// training rows of `manifest` and scores rows whose language is in
// config.eval.heldout_languages (or the test split when none are listed).
// Cells with and without the contrastive term share data order per seed; the
// two-stage cells continue from the matching stage-1 cell.
AblationResult RunAblation(const RunConfig& config, const Manifest& manifest,
                           const FeatureBank& bank);

// Rows scored by the ablation harness.
std::vector<size_t> HeldOutRows(const Manifest& manifest,
                                const EvalConfig& config);

enum class SpectralDistance { kEuclidean, kCosine };

// Cross-language consistency of time-averaged log-mel spectra. Each
// (language, emotion) cell is the average mean spectrogram of its rows. For
// an emotion, `intra` is the mean distance between its cells across language
// pairs; `inter` is the mean distance from its cells to every cell of a
// different emotion.
struct SpectralConsistency {
  SpectralDistance distance = SpectralDistance::kEuclidean;
  std::vector<std::string> languages;  // sorted
  std::vector<Emotion> emotions;       // by code
  Matrix cells;                        // (language-major) x n_mels
  std::vector<double> intra;           // per emotion
  std::vector<double> inter;           // per emotion
  bool consistent = false;             // intra < inter for every emotion

  std::string ToJson(const std::string& config_json) const;
  std::string CellsCsv() const;
};

// `mean_specs` holds one mean spectrogram per manifest entry. Needs at least
// two languages and two emotions, every cell populated.
SpectralConsistency AnalyzeMeanSpectrograms(const Manifest& manifest,
                                            const std::vector<Vector>& mean_specs,
                                            SpectralDistance distance);

// Mean log-mel spectrum per manifest entry.
std::vector<Vector> MeanSpectrograms(const FrameParams& params,
                                     const Manifest& manifest,
                                     const WaveLoader& loader, int threads = 1);

// CSV exports: [id, language, emotion, v0..v{d-1}] / [id, language, emotion,
// x, y].
std::string VectorsCsv(const Manifest& manifest, const Matrix& rows,
                       const std::string& column_prefix);
std::string ProjectionCsv(const Manifest& manifest, const Projection& p);

}  // namespace emoalign

#endif  // EMOALIGN_EVAL_H_
