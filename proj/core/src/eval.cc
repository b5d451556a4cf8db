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

#include "emoalign/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "emoalign/checkpoint.h"
#include "emoalign/parallel.h"

namespace emoalign {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(std::vector<Emotion> classes)
    : classes_(std::move(classes)) {
  std::sort(classes_.begin(), classes_.end(),
            [](Emotion a, Emotion b) { return Code(a) < Code(b); });
  classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
  counts_.assign(classes_.size() * classes_.size(), 0);
}

int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), int64_t{0});
}

int ConfusionMatrix::IndexOf(Emotion e) const {
  auto it = std::find(classes_.begin(), classes_.end(), e);
  return it == classes_.end() ? -1 : static_cast<int>(it - classes_.begin());
}

void ConfusionMatrix::Add(Emotion gold, Emotion pred) {
  const int g = IndexOf(gold);
  const int p = IndexOf(pred);
  if (g < 0 || p < 0) {
    throw ValidationError("confusion matrix: label outside the class set");
  }
  ++at(g, p);
}

MetricsReport ComputeMetrics(const ConfusionMatrix& cm) {
  const int64_t total = cm.total();
  if (cm.k() == 0 || total < 1) {
    throw ValidationError("metrics: empty confusion matrix");
  }
  MetricsReport r;
  r.confusion = cm;
  r.n = total;
  const int k = cm.k();
  int64_t trace = 0;
  int supported = 0;
  double recall_sum = 0.0;
  for (int c = 0; c < k; ++c) {
    int64_t support = 0;
    int64_t predicted = 0;
    for (int j = 0; j < k; ++j) {
      support += cm.at(c, j);
      predicted += cm.at(j, c);
    }
    const int64_t tp = cm.at(c, c);
    trace += tp;
    if (support == 0) continue;
    const double recall = static_cast<double>(tp) / static_cast<double>(support);
    const double precision =
        predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    const double f1 = precision + recall == 0.0
                          ? 0.0
                          : 2.0 * precision * recall / (precision + recall);
    const double weight = static_cast<double>(support) / static_cast<double>(total);
    ++supported;
    recall_sum += recall;
    r.wf1 += weight * f1;
    r.precision += weight * precision;
  }
  r.wa = static_cast<double>(trace) / static_cast<double>(total);
  r.ua = recall_sum / supported;
  return r;
}

namespace {

json ReportJson(const MetricsReport& r) {
  json confusion = json::array();
  for (int g = 0; g < r.confusion.k(); ++g) {
    json row = json::array();
    for (int p = 0; p < r.confusion.k(); ++p) row.push_back(r.confusion.at(g, p));
    confusion.push_back(std::move(row));
  }
  return {{"group",
           {{"dataset", r.dataset}, {"language", r.language}, {"classes", r.confusion.k()}}},
          {"wa", r.wa},
          {"ua", r.ua},
          {"wf1", r.wf1},
          {"precision", r.precision},
          {"confusion", std::move(confusion)},
          {"n", r.n},
          {"zero_shot", r.zero_shot}};
}

json ConfigValue(const std::string& config_json) {
  return config_json.empty() ? json(nullptr) : json::parse(config_json);
}

std::vector<std::string> EmotionNames(const std::vector<Emotion>& emotions) {
  std::vector<std::string> out;
  for (Emotion e : emotions) out.emplace_back(EmotionName(e));
  return out;
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct RowOutput {
  Vector logits;
  Vector pooled;
};

std::vector<RowOutput> RunRows(const Models& models, const FeatureBank& bank,
                               std::span<const size_t> rows, int threads) {
  std::vector<RowOutput> out(rows.size());
  ParallelFor(rows.size(), threads, [&](size_t i) {
    UtteranceForward f = RunUtterance(models, bank.features[rows[i]], false);
    out[i] = RowOutput{std::move(f.logits), std::move(f.pooled.unit)};
  });
  return out;
}

EvaluationResult EvaluateRows(const Models& models, const Manifest& manifest,
                              const FeatureBank& bank, std::span<const size_t> rows,
                              const std::vector<Emotion>& restrict,
                              const std::vector<std::string>& seen_datasets,
                              int threads) {
  if (rows.empty()) throw ValidationError("evaluate: empty manifest");
  if (restrict.empty()) throw ValidationError("evaluate: empty class set");
  if (bank.features.size() != manifest.entries.size()) {
    throw ValidationError("evaluate: feature bank does not match the manifest");
  }
  const ConfusionMatrix empty(restrict);
  const std::vector<RowOutput> outputs = RunRows(models, bank, rows, threads);
  const Vocab& vocab = models.decoder.vocab();

  EvaluationResult result;
  ConfusionMatrix pooled = empty;
  std::map<std::pair<std::string, std::string>, ConfusionMatrix> groups;
  for (size_t i = 0; i < rows.size(); ++i) {
    const Utterance& u = manifest.entries[rows[i]];
    if (empty.IndexOf(u.emotion) < 0) {
      ++result.skipped;
      continue;
    }
    Prediction p;
    p.id = u.id;
    p.gold = u.emotion;
    p.pred = PredictEmotion(outputs[i].logits, vocab, restrict);
    for (Emotion e : empty.classes()) {
      p.logits.push_back(outputs[i].logits[vocab.EmotionTokenId(e)]);
    }
    pooled.Add(p.gold, p.pred);
    groups.try_emplace({u.dataset, u.language.code()}, empty)
        .first->second.Add(p.gold, p.pred);
    result.predictions.push_back(std::move(p));
  }
  if (pooled.total() == 0) {
    throw ValidationError("evaluate: no utterance has a label in the class set (" +
                          std::to_string(result.skipped) + " skipped)");
  }
  auto seen = [&](const std::string& d) {
    return std::find(seen_datasets.begin(), seen_datasets.end(), d) != seen_datasets.end();
  };
  bool all_zero_shot = true;
  for (const auto& [key, cm] : groups) {
    MetricsReport r = ComputeMetrics(cm);
    r.dataset = key.first;
    r.language = key.second;
    r.zero_shot = !seen(key.first);
    all_zero_shot = all_zero_shot && r.zero_shot;
    result.groups.push_back(std::move(r));
  }
  result.pooled = ComputeMetrics(pooled);
  result.pooled.dataset = "*";
  result.pooled.language = "*";
  result.pooled.zero_shot = all_zero_shot;
  return result;
}

}  // namespace

std::string EvaluationResult::ToJson(const std::string& config_json, uint64_t seed) const {
  json j;
  j["config"] = ConfigValue(config_json);
  j["seed"] = seed;
  j["classes"] = EmotionNames(pooled.confusion.classes());
  j["skipped"] = skipped;
  j["pooled"] = ReportJson(pooled);
  j["groups"] = json::array();
  for (const auto& g : groups) j["groups"].push_back(ReportJson(g));
  return j.dump();
}

std::string EvaluationResult::PredictionsJsonl() const {
  std::string out;
  for (const auto& p : predictions) {
    json j = {{"id", p.id},
              {"gold", EmotionName(p.gold)},
              {"pred", EmotionName(p.pred)},
              {"logits_emotion_subset", p.logits}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

EvaluationResult Evaluate(const Models& models, const Manifest& manifest,
                          const FeatureBank& bank, const std::vector<Emotion>& restrict,
                          const std::vector<std::string>& seen_datasets, int threads) {
  std::vector<size_t> rows(manifest.entries.size());
  std::iota(rows.begin(), rows.end(), size_t{0});
  return EvaluateRows(models, manifest, bank, rows, restrict, seen_datasets, threads);
}

EvaluationResult Evaluate(const TrainingState& state, const Manifest& manifest,
                          const WaveLoader& loader, const std::vector<Emotion>& restrict,
                          int threads) {
  if (manifest.entries.empty()) throw ValidationError("evaluate: empty manifest");
  const FeatureBank bank = BuildFeatureBank(state.models, manifest, loader, threads);
  return Evaluate(state.models, manifest, bank, restrict, state.seen_datasets, threads);
}

Matrix PooledEmbeddings(const Models& models, const FeatureBank& bank, int threads) {
  std::vector<size_t> rows(bank.features.size());
  std::iota(rows.begin(), rows.end(), size_t{0});
  const std::vector<RowOutput> out = RunRows(models, bank, rows, threads);
  Matrix m(static_cast<Eigen::Index>(rows.size()), models.qformer.config.d_model);
  for (size_t i = 0; i < rows.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = out[i].pooled.transpose();
  }
  return m;
}

Projection Project2D(const Matrix& embeddings) {
  const Eigen::Index n = embeddings.rows();
  const Eigen::Index d = embeddings.cols();
  if (n < 3 || d < 2) throw ValidationError("projection: need n >= 3 and d >= 2");
  const Matrix centered = embeddings.rowwise() - embeddings.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
  const double total = cov.trace();
  if (!(total > 1e-24)) throw ValidationError("projection: data has rank 0");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("projection: eigensolver failed");
  Projection p;
  p.coords.resize(n, 2);
  for (int c = 0; c < 2; ++c) {
    const Eigen::Index idx = d - 1 - c;  // eigenvalues ascend
    Vector col = centered * solver.eigenvectors().col(idx);
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col[arg] < 0) col = -col;
    p.coords.col(c) = col;
    p.explained[c] = std::max(0.0, solver.eigenvalues()[idx]) / total;
  }
  return p;
}

double SilhouetteScore(const Matrix& embeddings, std::span<const int> labels) {
  const Eigen::Index n = embeddings.rows();
  if (static_cast<size_t>(n) != labels.size()) {
    throw ValidationError("silhouette: labels do not match embeddings");
  }
  std::map<int, int> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw ValidationError("silhouette: need at least two labels");
  for (const auto& [label, count] : sizes) {
    if (count < 2) {
      throw ValidationError("silhouette: label " + std::to_string(label) +
                            " has a single member");
    }
  }
  Matrix unit = embeddings;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = unit.row(i).norm();
    if (norm == 0.0) throw NumericError("silhouette: zero embedding");
    unit.row(i) /= norm;
  }
  const Matrix dist = (1.0 - (unit * unit.transpose()).array()).max(0.0).matrix();
  std::vector<int> keys;
  for (const auto& [label, count] : sizes) keys.push_back(label);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::map<int, double> acc;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) acc[labels[j]] += dist(i, j);
    }
    const double a = acc[labels[i]] / (sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int l : keys) {
      if (l != labels[i]) b = std::min(b, acc[l] / sizes[l]);
    }
    const double denom = std::max(a, b);
    sum += denom == 0.0 ? 0.0 : (b - a) / denom;
  }
  return sum / static_cast<double>(n);
}

std::string_view AblationCellName(AblationCell cell) {
  switch (cell) {
    case AblationCell::kSer:
      return "ser";
    case AblationCell::kSerLec:
      return "ser+lec";
    case AblationCell::kMser:
      return "mser";
    case AblationCell::kMserLec:
      return "mser+lec";
    case AblationCell::kTwoStage:
      return "two-stage";
    case AblationCell::kTwoStageLec:
      return "two-stage+lec";
  }
  return "?";
}

double AblationResult::MeanWa(AblationCell cell) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.cell == cell) {
      sum += r.metrics.wa;
      ++n;
    }
  }
  if (n == 0) throw ValidationError("ablation: no rows for that cell");
  return sum / n;
}

const AblationRow& AblationResult::Row(AblationCell cell, uint64_t seed) const {
  for (const auto& r : rows) {
    if (r.cell == cell && r.seed == seed) return r;
  }
  throw ValidationError("ablation: no row for that cell and seed");
}

std::string AblationResult::ToJson(const std::string& config_json) const {
  json j;
  j["config"] = ConfigValue(config_json);
  j["rows"] = json::array();
  std::map<int, std::array<double, 6>> sums;
  std::map<int, int> counts;
  for (const auto& r : rows) {
    json row = ReportJson(r.metrics);
    row["cell"] = AblationCellName(r.cell);
    row["seed"] = r.seed;
    row["silhouette"] = r.silhouette;
    j["rows"].push_back(std::move(row));
    auto& s = sums[static_cast<int>(r.cell)];
    s[0] += r.metrics.wa;
    s[1] += r.metrics.ua;
    s[2] += r.metrics.wf1;
    s[3] += r.metrics.precision;
    s[4] += r.silhouette;
    ++counts[static_cast<int>(r.cell)];
  }
  j["mean"] = json::array();
  for (const auto& [cell, s] : sums) {
    const double n = counts[cell];
    j["mean"].push_back({{"cell", AblationCellName(static_cast<AblationCell>(cell))},
                         {"wa", s[0] / n},
                         {"ua", s[1] / n},
                         {"wf1", s[2] / n},
                         {"precision", s[3] / n},
                         {"silhouette", s[4] / n}});
  }
  j["untrained_wa"] = untrained_wa;
  j["untrained_silhouette"] = untrained_silhouette;
  return j.dump();
}

std::vector<size_t> HeldOutRows(const Manifest& manifest, const EvalConfig& config) {
  std::vector<size_t> rows;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const Utterance& u = manifest.entries[i];
    const bool keep =
        config.heldout_languages.empty()
            ? u.split == Split::kTest
            : std::find(config.heldout_languages.begin(), config.heldout_languages.end(),
                        u.language.code()) != config.heldout_languages.end();
    if (keep) rows.push_back(i);
  }
  return rows;
}

AblationResult RunAblation(const RunConfig& config, const Manifest& manifest,
                           const FeatureBank& bank) {
  config.Validate();
  const std::vector<size_t> heldout = HeldOutRows(manifest, config.eval);
  if (heldout.empty()) throw ValidationError("ablation: no held-out rows");
  const std::vector<Emotion> restrict = ClassSet(config.eval.classes);
  const std::string config_json = config.ToJson();
  const int threads = config.train.threads;

  std::vector<int> heldout_labels;
  for (size_t r : heldout) heldout_labels.push_back(bank.labels[r]);

  auto score = [&](const Models& models, const std::vector<std::string>& seen,
                   AblationCell cell, uint64_t seed) {
    AblationRow row{cell, seed, {}, 0.0};
    row.metrics = EvaluateRows(models, manifest, bank, heldout, restrict, seen, threads)
                      .pooled;
    const std::vector<RowOutput> out = RunRows(models, bank, heldout, threads);
    Matrix emb(static_cast<Eigen::Index>(out.size()), models.qformer.config.d_model);
    for (size_t i = 0; i < out.size(); ++i) {
      emb.row(static_cast<Eigen::Index>(i)) = out[i].pooled.transpose();
    }
    row.silhouette = SilhouetteScore(emb, heldout_labels);
    return row;
  };

  AblationResult result;
  for (uint64_t seed : config.eval.ablation_seeds) {
    ModelConfig mc = config.model;
    mc.qformer_seed = CombineSeed(config.model.qformer_seed, seed);
    TrainConfig base = config.train;
    base.seed = CombineSeed(config.train.seed, seed);
    const TrainingState fresh = FreshState(config_json, mc, base.seed);

    const AblationRow untrained = score(fresh.models, {}, AblationCell::kSer, seed);
    result.untrained_wa.push_back(untrained.metrics.wa);
    result.untrained_silhouette.push_back(untrained.silhouette);

    std::vector<AblationRow> rows(kNumAblationCells);
    for (bool lec : {false, true}) {
      TrainConfig t = base;
      t.use_contrastive = lec;
      t.two_stage = false;
      const AblationCell ser = lec ? AblationCell::kSerLec : AblationCell::kSer;
      const AblationCell mser = lec ? AblationCell::kMserLec : AblationCell::kMser;
      const AblationCell two = lec ? AblationCell::kTwoStageLec : AblationCell::kTwoStage;

      StageResult s1 = TrainStage(1, manifest, bank, t, fresh);
      rows[static_cast<int>(ser)] = score(s1.state.models, s1.state.seen_datasets, ser, seed);

      const StageResult m = TrainStage(2, manifest, bank, t, fresh);
      rows[static_cast<int>(mser)] = score(m.state.models, m.state.seen_datasets, mser, seed);

      t.two_stage = true;
      const StageResult s2 = TrainStage(2, manifest, bank, t, std::move(s1.state));
      rows[static_cast<int>(two)] = score(s2.state.models, s2.state.seen_datasets, two, seed);
    }
    for (auto& r : rows) result.rows.push_back(std::move(r));
  }
  return result;
}

std::vector<Vector> MeanSpectrograms(const FrameParams& params, const Manifest& manifest,
                                     const WaveLoader& loader, int threads) {
  std::vector<Vector> out(manifest.entries.size());
  ParallelFor(out.size(), threads, [&](size_t i) {
    out[i] = MeanSpectrogram(WaveToLogMel(params, loader(manifest.entries[i])));
  });
  return out;
}

SpectralConsistency AnalyzeMeanSpectrograms(const Manifest& manifest,
                                            const std::vector<Vector>& mean_specs,
                                            SpectralDistance distance) {
  if (mean_specs.size() != manifest.entries.size() || mean_specs.empty()) {
    throw ValidationError("mean-spec: one spectrum per manifest entry required");
  }
  std::set<std::string> langs;
  std::set<int> emos;
  for (const auto& u : manifest.entries) {
    langs.insert(u.language.code());
    emos.insert(Code(u.emotion));
  }
  SpectralConsistency s;
  s.distance = distance;
  s.languages.assign(langs.begin(), langs.end());
  for (int c : emos) s.emotions.push_back(EmotionFromCode(c));
  const int nl = static_cast<int>(s.languages.size());
  const int ne = static_cast<int>(s.emotions.size());
  if (nl < 2 || ne < 2) {
    throw ValidationError("mean-spec: need at least two languages and two emotions");
  }
  const Eigen::Index dim = mean_specs.front().size();
  s.cells = Matrix::Zero(nl * ne, dim);
  std::vector<int> counts(static_cast<size_t>(nl * ne), 0);
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const Utterance& u = manifest.entries[i];
    const int li = static_cast<int>(
        std::lower_bound(s.languages.begin(), s.languages.end(), u.language.code()) -
        s.languages.begin());
    const int ei = static_cast<int>(
        std::find(s.emotions.begin(), s.emotions.end(), u.emotion) - s.emotions.begin());
    if (mean_specs[i].size() != dim) throw ValidationError("mean-spec: ragged spectra");
    s.cells.row(li * ne + ei) += mean_specs[i].transpose();
    ++counts[li * ne + ei];
  }
  for (int c = 0; c < nl * ne; ++c) {
    if (counts[c] == 0) {
      throw ValidationError("mean-spec: no rows for " + s.languages[c / ne] + "/" +
                            std::string(EmotionName(s.emotions[c % ne])));
    }
    s.cells.row(c) /= counts[c];
  }
  auto dist = [&](int a, int b) {
    if (distance == SpectralDistance::kEuclidean) {
      return (s.cells.row(a) - s.cells.row(b)).norm();
    }
    const double denom = s.cells.row(a).norm() * s.cells.row(b).norm();
    return denom == 0.0 ? 1.0 : 1.0 - s.cells.row(a).dot(s.cells.row(b)) / denom;
  };
  s.consistent = true;
  for (int e = 0; e < ne; ++e) {
    double intra = 0.0;
    int n_intra = 0;
    double inter = 0.0;
    int n_inter = 0;
    for (int l = 0; l < nl; ++l) {
      for (int l2 = 0; l2 < nl; ++l2) {
        if (l2 != l) {
          intra += dist(l * ne + e, l2 * ne + e);
          ++n_intra;
        }
        for (int e2 = 0; e2 < ne; ++e2) {
          if (e2 == e) continue;
          inter += dist(l * ne + e, l2 * ne + e2);
          ++n_inter;
        }
      }
    }
    s.intra.push_back(intra / n_intra);
    s.inter.push_back(inter / n_inter);
    s.consistent = s.consistent && s.intra.back() < s.inter.back();
  }
  return s;
}

std::string SpectralConsistency::ToJson(const std::string& config_json) const {
  json j;
  j["config"] = ConfigValue(config_json);
  j["distance"] = distance == SpectralDistance::kEuclidean ? "euclidean" : "cosine";
  j["languages"] = languages;
  j["consistent"] = consistent;
  j["emotions"] = json::array();
  for (size_t e = 0; e < emotions.size(); ++e) {
    j["emotions"].push_back(
        {{"emotion", EmotionName(emotions[e])}, {"intra", intra[e]}, {"inter", inter[e]}});
  }
  return j.dump();
}

std::string SpectralConsistency::CellsCsv() const {
  std::string out = "language,emotion";
  for (Eigen::Index m = 0; m < cells.cols(); ++m) out += ",m" + std::to_string(m);
  out += '\n';
  const size_t ne = emotions.size();
  for (Eigen::Index r = 0; r < cells.rows(); ++r) {
    out += languages[static_cast<size_t>(r) / ne];
    out += ',';
    out += EmotionName(emotions[static_cast<size_t>(r) % ne]);
    for (Eigen::Index m = 0; m < cells.cols(); ++m) out += "," + FormatDouble(cells(r, m));
    out += '\n';
  }
  return out;
}

std::string VectorsCsv(const Manifest& manifest, const Matrix& rows,
                       const std::string& column_prefix) {
  if (static_cast<size_t>(rows.rows()) != manifest.entries.size()) {
    throw ValidationError("csv: row count does not match the manifest");
  }
  std::string out = "id,language,emotion";
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    out += "," + column_prefix + std::to_string(c);
  }
  out += '\n';
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const Utterance& u = manifest.entries[static_cast<size_t>(r)];
    out += u.id + "," + u.language.code() + "," + std::string(EmotionName(u.emotion));
    for (Eigen::Index c = 0; c < rows.cols(); ++c) out += "," + FormatDouble(rows(r, c));
    out += '\n';
  }
  return out;
}

std::string ProjectionCsv(const Manifest& manifest, const Projection& p) {
  if (static_cast<size_t>(p.coords.rows()) != manifest.entries.size()) {
    throw ValidationError("csv: row count does not match the manifest");
  }
  std::string out = "id,language,emotion,x,y\n";
  for (Eigen::Index r = 0; r < p.coords.rows(); ++r) {
    const Utterance& u = manifest.entries[static_cast<size_t>(r)];
    out += u.id + "," + u.language.code() + "," + std::string(EmotionName(u.emotion)) +
           "," + FormatDouble(p.coords(r, 0)) + "," + FormatDouble(p.coords(r, 1)) + "\n";
  }
  return out;
}

}  // namespace emoalign
