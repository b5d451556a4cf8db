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

#include "emoalign/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "emoalign/synth.h"
#include <nlohmann/json.hpp>

namespace emoalign {

using nlohmann::json;

bool StageFilter::Accepts(const Utterance& u) const {
  if (synthetic && u.synthetic != *synthetic) return false;
  if (languages.empty()) return true;
  return std::find(languages.begin(), languages.end(), u.language.code()) !=
         languages.end();
}

void TrainConfig::Validate() const {
  if (!(lr >= 0)) throw ValidationError("train: lr must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ValidationError("train: betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ValidationError("train: adam_eps must be > 0");
  if (!(weight_decay >= 0)) throw ValidationError("train: weight_decay must be >= 0");
  if (batch_size < 2) {
    throw ValidationError("train: batch_size must be >= 2 (contrastive pairs)");
  }
  if (steps < 0) throw ValidationError("train: steps must be >= 0");
  if (eval_every < 0) throw ValidationError("train: eval_every must be >= 0");
  if (threads < 1) throw ValidationError("train: threads must be >= 1");
  loss.Validate();
}

namespace {

std::vector<Matrix*> TensorPtrs(QFormerParams& p) {
  std::vector<Matrix*> out;
  VisitTensors(p, "", [&](const std::string&, Matrix& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> TensorNames(const QFormerParams& p) {
  std::vector<std::string> out;
  VisitTensors(p, "qformer", [&](const std::string& name, const Matrix&) {
    out.push_back(name);
  });
  return out;
}

}  // namespace

AdamState InitAdam(const QFormerParams& params) {
  AdamState s;
  s.m = ZerosLike(params);
  s.v = ZerosLike(params);
  return s;
}

void AdamWUpdate(QFormerParams& params, const QFormerParams& grads,
                 AdamState& state, const TrainConfig& config) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  auto p = TensorPtrs(params);
  auto g = TensorPtrs(const_cast<QFormerParams&>(grads));
  auto m = TensorPtrs(state.m);
  auto v = TensorPtrs(state.v);
  for (size_t i = 0; i < p.size(); ++i) {
    m[i]->array() = config.beta1 * m[i]->array() + (1.0 - config.beta1) * g[i]->array();
    v[i]->array() =
        config.beta2 * v[i]->array() + (1.0 - config.beta2) * g[i]->array().square();
    const auto m_hat = m[i]->array() / bc1;
    const auto v_hat = v[i]->array() / bc2;
    p[i]->array() -= config.lr * (m_hat / (v_hat.sqrt() + config.adam_eps) +
                                  config.weight_decay * p[i]->array());
  }
}

double ClipGradNorm(QFormerParams& grads, double max_norm) {
  double sq = 0.0;
  VisitTensors(grads, "", [&](const std::string&, const Matrix& t) {
    sq += t.squaredNorm();
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / norm;
    VisitTensors(grads, "", [&](const std::string&, Matrix& t) { t *= scale; });
  }
  return norm;
}

namespace {

struct BatchOutputs {
  Matrix embeddings;
  std::vector<Vector> logits;
};

BatchOutputs ForwardBatch(const Models& models,
                          std::span<const Matrix* const> features) {
  BatchOutputs out;
  out.embeddings.resize(static_cast<Eigen::Index>(features.size()),
                        models.qformer.config.d_model);
  out.logits.reserve(features.size());
  for (size_t i = 0; i < features.size(); ++i) {
    UtteranceForward f = RunUtterance(models, *features[i], /*retain=*/false);
    out.embeddings.row(static_cast<Eigen::Index>(i)) = f.pooled.unit.transpose();
    out.logits.push_back(std::move(f.logits));
  }
  return out;
}

double LossFromOutputs(const BatchOutputs& out, std::span<const int> labels,
                       const Vocab& vocab, const LossConfig& loss,
                       bool use_contrastive) {
  double ce = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    ce += CrossEntropy(out.logits[i], vocab.EmotionTokenId(EmotionFromCode(labels[i]))).loss;
  }
  ce /= static_cast<double>(labels.size());
  const double lec =
      use_contrastive ? ContrastiveLossUnchecked(out.embeddings, labels, loss).loss : 0.0;
  return StageLoss(lec, ce, loss);
}

}  // namespace

BatchLoss ComputeBatchLoss(const Models& models,
                           std::span<const Matrix* const> features,
                           std::span<const int> labels, const LossConfig& loss,
                           bool use_contrastive, QFormerParams* grads) {
  const size_t b = features.size();
  if (b == 0 || labels.size() != b) {
    throw ValidationError("batch: features and labels must be nonempty and parallel");
  }
  const bool retain = grads != nullptr;
  std::vector<UtteranceForward> fwd;
  fwd.reserve(b);
  BatchLoss r;
  r.embeddings.resize(static_cast<Eigen::Index>(b), models.qformer.config.d_model);
  for (size_t i = 0; i < b; ++i) {
    fwd.push_back(RunUtterance(models, *features[i], retain));
    r.embeddings.row(static_cast<Eigen::Index>(i)) = fwd.back().pooled.unit.transpose();
  }
  const ContrastiveResult lec = ContrastiveLoss(r.embeddings, labels, loss);
  r.lec = lec.loss;
  r.active_hinges = lec.active_hinges;

  const Vocab& vocab = models.decoder.vocab();
  std::vector<CrossEntropyResult> ce(b);
  for (size_t i = 0; i < b; ++i) {
    ce[i] = CrossEntropy(fwd[i].logits, vocab.EmotionTokenId(EmotionFromCode(labels[i])));
    r.ce += ce[i].loss;
  }
  r.ce /= static_cast<double>(b);
  r.total = StageLoss(use_contrastive ? r.lec : 0.0, r.ce, loss);
  if (!retain) return r;

  const QFormerParams& params = models.qformer.params;
  const int n_queries = models.qformer.config.n_queries;
  const double ce_scale = loss.lambda / static_cast<double>(b);
  for (size_t i = 0; i < b; ++i) {
    Matrix d_query(n_queries, models.qformer.config.d_model);
    d_query.setZero();
    if (ce_scale != 0.0) {
      const Matrix d_audio =
          models.decoder.BackwardToAudio(fwd[i].decoder_cache, ce[i].grad * ce_scale);
      d_query += Backward(params.decoder_proj, fwd[i].proj_cache, d_audio,
                          &grads->decoder_proj);
    }
    if (use_contrastive) {
      d_query += PoolQueriesBackward(fwd[i].pooled, n_queries,
                                     lec.grad.row(static_cast<Eigen::Index>(i)).transpose());
    }
    QFormerBackward(params, fwd[i].qformer_cache, d_query, grads);
  }
  return r;
}

StepLog TrainStep(Models& models, AdamState& adam,
                  std::span<const Matrix* const> features,
                  std::span<const int> labels, const TrainConfig& config,
                  int64_t step) {
#ifndef NDEBUG
  const uint64_t encoder_digest = models.encoder.ComputeChecksum();
  const uint64_t decoder_digest = models.decoder.ComputeChecksum();
#endif
  ZeroGrads(models.qformer);
  const BatchLoss loss = ComputeBatchLoss(models, features, labels, config.loss,
                                          config.use_contrastive, &models.qformer.grads);
  if (!std::isfinite(loss.total)) {
    throw NumericError("train: non-finite loss at step " + std::to_string(step) +
                       " (lec=" + std::to_string(loss.lec) +
                       ", ce=" + std::to_string(loss.ce) + ")");
  }
  ClipGradNorm(models.qformer.grads, config.clip_norm);
  AdamWUpdate(models.qformer.params, models.qformer.grads, adam, config);
#ifndef NDEBUG
  if (models.encoder.ComputeChecksum() != encoder_digest ||
      models.decoder.ComputeChecksum() != decoder_digest) {
    throw std::logic_error("train: a frozen module was modified");
  }
#endif
  return StepLog{step, loss.lec, loss.ce, loss.total};
}

BatchPlan MakeBatches(std::span<const int> labels, int batch_size,
                      int num_batches, uint64_t seed) {
  if (batch_size < 2) throw ValidationError("batches: batch size must be >= 2");
  if (static_cast<int64_t>(labels.size()) < batch_size) {
    throw ValidationError("batches: pool of " + std::to_string(labels.size()) +
                          " items is smaller than batch size " +
                          std::to_string(batch_size));
  }
  std::map<int, std::vector<size_t>> by_label;
  for (size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  std::vector<int> present;
  for (const auto& [label, idx] : by_label) present.push_back(label);

  Rng rng(Mix64(seed ^ 0xBA7C4ULL));
  std::map<int, size_t> cursor;
  for (auto& [label, idx] : by_label) {
    rng.Shuffle(idx);
    cursor[label] = 0;
  }
  BatchPlan plan;
  plan.single_label = present.size() < 2;
  plan.batches.reserve(static_cast<size_t>(std::max(0, num_batches)));
  for (int n = 0; n < num_batches; ++n) {
    std::vector<int> order = present;
    rng.Shuffle(order);
    std::vector<size_t> batch;
    batch.reserve(batch_size);
    for (size_t k = 0; static_cast<int>(batch.size()) < batch_size; ++k) {
      const int label = order[k % order.size()];
      auto& idx = by_label[label];
      size_t& pos = cursor[label];
      if (pos == idx.size()) {
        rng.Shuffle(idx);
        pos = 0;
      }
      batch.push_back(idx[pos++]);
    }
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

std::vector<size_t> SelectStageRows(const Manifest& manifest, int stage,
                                    const TrainConfig& config) {
  if (stage != 1 && stage != 2) {
    throw ValidationError("train: stage must be 1 or 2, got " + std::to_string(stage));
  }
  const StageFilter& filter = stage == 1 ? config.stage1 : config.stage2;
  std::vector<size_t> rows;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const Utterance& u = manifest.entries[i];
    if (u.split != Split::kTrain || !filter.Accepts(u)) continue;
    if (std::find(config.exclude_languages.begin(), config.exclude_languages.end(),
                  u.language.code()) != config.exclude_languages.end()) {
      continue;
    }
    rows.push_back(i);
  }
  return rows;
}

StageResult TrainStage(int stage, const Manifest& manifest, const FeatureBank& bank,
                       const TrainConfig& config, TrainingState init,
                       const EvalHook& eval_hook) {
  config.Validate();
  if (bank.features.size() != manifest.entries.size()) {
    throw ValidationError("train: feature bank does not match the manifest");
  }
  if (stage == 2 && config.two_stage && init.stage != 1) {
    throw ValidationError(
        "train: stage 2 of a two-stage run needs a stage-1 checkpoint (got stage " +
        std::to_string(init.stage) + ")");
  }
  const std::vector<size_t> rows = SelectStageRows(manifest, stage, config);
  if (rows.empty()) {
    throw ValidationError("train: no manifest rows match the stage-" +
                          std::to_string(stage) + " filter");
  }
  std::vector<int> labels(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) labels[i] = bank.labels[rows[i]];

  StageResult result{std::move(init), {}, {}};
  TrainingState& state = result.state;
  const uint64_t encoder_digest = state.models.encoder.ComputeChecksum();
  const uint64_t decoder_digest = state.models.decoder.ComputeChecksum();

  if (config.steps > 0) {
    const BatchPlan plan = MakeBatches(
        labels, config.batch_size, config.steps,
        CombineSeed(config.seed, static_cast<uint64_t>(stage)));
    std::vector<const Matrix*> feats(config.batch_size);
    std::vector<int> batch_labels(config.batch_size);
    for (int s = 0; s < config.steps; ++s) {
      const auto& batch = plan.batches[s];
      for (size_t k = 0; k < batch.size(); ++k) {
        feats[k] = &bank.features[rows[batch[k]]];
        batch_labels[k] = labels[batch[k]];
      }
      ++state.step;
      result.log.push_back(TrainStep(state.models, state.adam, feats, batch_labels,
                                     config, state.step));
      if (eval_hook && config.eval_every > 0 && (s + 1) % config.eval_every == 0) {
        EvalPoint p = eval_hook(state.models);
        p.step = state.step;
        result.evals.push_back(p);
      }
    }
  }
  if (state.models.encoder.ComputeChecksum() != encoder_digest ||
      state.models.decoder.ComputeChecksum() != decoder_digest) {
    throw std::logic_error("train: a frozen module was modified");
  }

  std::set<std::string> datasets(state.seen_datasets.begin(), state.seen_datasets.end());
  std::set<std::string> languages(state.seen_languages.begin(), state.seen_languages.end());
  for (size_t r : rows) {
    datasets.insert(manifest.entries[r].dataset);
    languages.insert(manifest.entries[r].language.code());
  }
  state.seen_datasets.assign(datasets.begin(), datasets.end());
  state.seen_languages.assign(languages.begin(), languages.end());
  state.stage = stage;
  state.seed = config.seed;
  return result;
}

std::string StepLogToJsonl(const std::vector<StepLog>& log) {
  std::string out;
  for (const auto& s : log) {
    json j;
    j["step"] = s.step;
    j["lec"] = s.lec;
    j["ce"] = s.ce;
    j["total"] = s.total;
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

struct GradVariant {
  std::string label;
  LossConfig loss;
  bool use_contrastive = true;
};

std::vector<GradCheckReport> GradCheckVariants(
    const Models& models, std::span<const Matrix* const> features,
    std::span<const int> labels, const std::vector<GradVariant>& variants,
    double eps, double tol) {
  if (!(eps > 0)) throw ValidationError("gradcheck: eps must be > 0");
  Models work = models;
  const Vocab& vocab = work.decoder.vocab();

  std::vector<GradCheckReport> reports(variants.size());
  std::vector<QFormerParams> analytic;
  const Matrix sim = [&] {
    const BatchOutputs out = ForwardBatch(work, features);
    return Matrix(out.embeddings * out.embeddings.transpose());
  }();
  for (size_t v = 0; v < variants.size(); ++v) {
    QFormerParams g = ZerosLike(work.qformer.params);
    const BatchLoss bl = ComputeBatchLoss(work, features, labels, variants[v].loss,
                                          variants[v].use_contrastive, &g);
    analytic.push_back(std::move(g));
    GradCheckReport& rep = reports[v];
    rep.label = variants[v].label;
    rep.loss = bl.total;
    rep.active_hinges = bl.active_hinges;
    rep.min_hinge_gap = 2.0;
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
      for (Eigen::Index j = 0; j < sim.cols(); ++j) {
        if (labels[i] == labels[j]) continue;
        ++rep.negative_pairs;
        rep.min_hinge_gap =
            std::min(rep.min_hinge_gap, std::abs(sim(i, j) - variants[v].loss.margin));
      }
    }
  }

  const std::vector<std::string> names = TensorNames(work.qformer.params);
  std::vector<Matrix*> params = TensorPtrs(work.qformer.params);
  std::vector<std::vector<Matrix*>> grads;
  for (auto& g : analytic) grads.push_back(TensorPtrs(g));

  for (size_t t = 0; t < params.size(); ++t) {
    Matrix& p = *params[t];
    std::vector<Matrix> numeric(variants.size(), Matrix::Zero(p.rows(), p.cols()));
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double orig = p.data()[k];
      p.data()[k] = orig + eps;
      const BatchOutputs plus = ForwardBatch(work, features);
      p.data()[k] = orig - eps;
      const BatchOutputs minus = ForwardBatch(work, features);
      p.data()[k] = orig;
      for (size_t v = 0; v < variants.size(); ++v) {
        const double lp = LossFromOutputs(plus, labels, vocab, variants[v].loss,
                                          variants[v].use_contrastive);
        const double lm = LossFromOutputs(minus, labels, vocab, variants[v].loss,
                                          variants[v].use_contrastive);
        numeric[v].data()[k] = (lp - lm) / (2.0 * eps);
      }
    }
    for (size_t v = 0; v < variants.size(); ++v) {
      const Matrix& a = *grads[v][t];
      GradCheckEntry e;
      e.tensor = names[t];
      e.size = p.size();
      e.max_abs_analytic = a.cwiseAbs().maxCoeff();
      e.max_abs_error = (a - numeric[v]).cwiseAbs().maxCoeff();
      const double scale = std::max(e.max_abs_analytic, numeric[v].cwiseAbs().maxCoeff());
      e.rel_error = scale < 1e-12 ? 0.0 : e.max_abs_error / scale;
      reports[v].max_rel_error = std::max(reports[v].max_rel_error, e.rel_error);
      reports[v].entries.push_back(std::move(e));
    }
  }
  for (auto& r : reports) r.passed = r.max_rel_error < tol;
  return reports;
}

}  // namespace

GradCheckReport GradCheck(const Models& models,
                          std::span<const Matrix* const> features,
                          std::span<const int> labels, const LossConfig& loss,
                          bool use_contrastive, double eps, double tol) {
  return GradCheckVariants(models, features, labels,
                           {GradVariant{"custom", loss, use_contrastive}}, eps, tol)
      .front();
}

std::string GradCheckSuiteResult::ToJson() const {
  json j;
  j["passed"] = passed;
  j["seconds"] = seconds;
  j["reports"] = json::array();
  for (const auto& r : reports) {
    json jr;
    jr["label"] = r.label;
    jr["loss"] = r.loss;
    jr["active_hinges"] = r.active_hinges;
    jr["negative_pairs"] = r.negative_pairs;
    jr["min_hinge_gap"] = r.min_hinge_gap;
    jr["max_rel_error"] = r.max_rel_error;
    jr["passed"] = r.passed;
    jr["tensors"] = json::array();
    for (const auto& e : r.entries) {
      jr["tensors"].push_back({{"name", e.tensor},
                               {"size", e.size},
                               {"max_abs_analytic", e.max_abs_analytic},
                               {"max_abs_error", e.max_abs_error},
                               {"rel_error", e.rel_error}});
    }
    j["reports"].push_back(std::move(jr));
  }
  return j.dump();
}

namespace {

// Margin halfway across the widest gap between consecutive different-label
// similarities, so some hinges are active and some are not.
double MixedMargin(const Matrix& sim, std::span<const int> labels) {
  std::vector<double> s;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < sim.cols(); ++j) {
      if (labels[i] != labels[j]) s.push_back(sim(i, j));
    }
  }
  std::sort(s.begin(), s.end());
  double best_gap = -1.0;
  double margin = 0.0;
  for (size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i + 1] - s[i] > best_gap) {
      best_gap = s[i + 1] - s[i];
      margin = 0.5 * (s[i] + s[i + 1]);
    }
  }
  return margin;
}

}  // namespace

GradCheckSuiteResult RunGradCheckSuite(double eps, double tol, uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  ModelConfig mc;
  mc.encoder.d_model = 16;
  mc.encoder.n_heads = 2;
  mc.encoder.max_frames = 16;
  mc.encoder.init_seed = seed;
  mc.qformer.n_queries = 4;
  mc.qformer.d_model = 16;
  mc.qformer.n_heads = 2;
  mc.qformer.n_layers = 2;
  mc.decoder.d_model = 16;
  mc.decoder.n_heads = 2;
  mc.decoder.init_seed = seed + 1;
  mc.qformer_seed = seed + 2;
  const Models models(mc);

  const SynthesisProfile profile = SynthesisProfile::Default();
  struct Item {
    const char* language;
    Emotion emotion;
  };
  // Stage 1: English source-style batch; stage 2: multilingual batch.
  const std::vector<std::vector<Item>> batches = {
      {{"en", Emotion::kHappy}, {"en", Emotion::kHappy},
       {"en", Emotion::kSad}, {"en", Emotion::kAngry}},
      {{"fr", Emotion::kSad}, {"de", Emotion::kSad},
       {"zh", Emotion::kNeutral}, {"es", Emotion::kFear}},
  };

  GradCheckSuiteResult result;
  result.passed = true;
  for (size_t stage = 0; stage < batches.size(); ++stage) {
    std::vector<Matrix> feats;
    std::vector<int> labels;
    for (size_t i = 0; i < batches[stage].size(); ++i) {
      const auto& item = batches[stage][i];
      const Waveform w =
          SynthesizeUtterance(profile, LanguageTag::Parse(item.language), item.emotion,
                              static_cast<int>(i), 16000, 0.2, 0.2);
      feats.push_back(ExtractFeatures(models, w));
      labels.push_back(Code(item.emotion));
    }
    std::vector<const Matrix*> ptrs;
    for (const auto& f : feats) ptrs.push_back(&f);

    Matrix emb(static_cast<Eigen::Index>(ptrs.size()), mc.qformer.d_model);
    for (size_t i = 0; i < ptrs.size(); ++i) {
      emb.row(static_cast<Eigen::Index>(i)) =
          RunUtterance(models, *ptrs[i], false).pooled.unit.transpose();
    }
    const Matrix sim = emb * emb.transpose();
    double min_neg = 1.0;
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
      for (Eigen::Index j = 0; j < sim.cols(); ++j) {
        if (labels[i] != labels[j]) min_neg = std::min(min_neg, sim(i, j));
      }
    }
    const std::string prefix = "stage" + std::to_string(stage + 1) + "/";
    LossConfig active;
    active.margin = std::max(-1.0, min_neg - 0.05);
    LossConfig inactive;
    inactive.margin = 1.0;
    LossConfig mixed;
    mixed.margin = MixedMargin(sim, labels);
    LossConfig weighted = mixed;
    weighted.w1 = 0.7;
    weighted.w2 = 1.3;
    weighted.lambda = 0.5;
    const std::vector<GradVariant> variants = {
        {prefix + "hinge-active", active, true},
        {prefix + "hinge-inactive", inactive, true},
        {prefix + "hinge-mixed", mixed, true},
        {prefix + "hinge-mixed-weighted", weighted, true},
        {prefix + "decode-only", LossConfig{}, false},
    };
    for (auto& r : GradCheckVariants(models, ptrs, labels, variants, eps, tol)) {
      result.passed = result.passed && r.passed;
      result.reports.push_back(std::move(r));
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                       .count();
  return result;
}

}  // namespace emoalign
