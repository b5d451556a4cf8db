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
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "test_util.h"

namespace emoalign {
namespace {

using testing::MemoryLoader;
using testing::TinyCorpus;
using testing::TinyModelConfig;

const std::vector<Emotion> kFour = {Emotion::kNeutral, Emotion::kHappy, Emotion::kSad,
                                    Emotion::kAngry};

// Tiny models plus a two-language corpus shared by the tests below.
class TrainerFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = new SynthCorpus(TinyCorpus({"en", "fr"}, kFour, 3));
    const Models models(TinyModelConfig());
    bank_ = new FeatureBank(
        BuildFeatureBank(models, corpus_->manifest, MemoryLoader(*corpus_), 1));
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete bank_;
  }

  static TrainConfig SmallTrain() {
    TrainConfig c;
    c.batch_size = 4;
    c.steps = 5;
    c.lr = 1e-2;
    return c;
  }

  static SynthCorpus* corpus_;
  static FeatureBank* bank_;
};

SynthCorpus* TrainerFixture::corpus_ = nullptr;
FeatureBank* TrainerFixture::bank_ = nullptr;

std::vector<const Matrix*> Pointers(const FeatureBank& bank, const std::vector<size_t>& rows) {
  std::vector<const Matrix*> out;
  for (size_t r : rows) out.push_back(&bank.features[r]);
  return out;
}

std::vector<int> LabelsOf(const FeatureBank& bank, const std::vector<size_t>& rows) {
  std::vector<int> out;
  for (size_t r : rows) out.push_back(bank.labels[r]);
  return out;
}

bool SameParams(const QFormerParams& a, const QFormerParams& b) {
  return ParamChecksum(a) == ParamChecksum(b);
}

TEST(StageFilterTest, Accepts) {
  Utterance u;
  u.language = LanguageTag::Parse("en");
  u.synthetic = false;
  const StageFilter stage1{false, {"en"}};
  const StageFilter stage2{true, {}};
  EXPECT_TRUE(stage1.Accepts(u));
  EXPECT_FALSE(stage2.Accepts(u));
  u.synthetic = true;
  u.language = LanguageTag::Parse("fr");
  EXPECT_FALSE(stage1.Accepts(u));
  EXPECT_TRUE(stage2.Accepts(u));
  EXPECT_TRUE(StageFilter{}.Accepts(u));
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.batch_size = 1;
  EXPECT_THROW(c.Validate(), ValidationError);
  c = TrainConfig{};
  c.lr = -1;
  EXPECT_THROW(c.Validate(), ValidationError);
  c = TrainConfig{};
  c.beta2 = 1.0;
  EXPECT_THROW(c.Validate(), ValidationError);
  c = TrainConfig{};
  c.loss.margin = 2;
  EXPECT_THROW(c.Validate(), ValidationError);
}

TEST(AdamWTest, MatchesScalarReference) {
  auto state = InitQFormer(TinyModelConfig().qformer, 1);
  QFormerParams& p = state.params;
  QFormerParams g = ZerosLike(p);
  g.queries.setConstant(0.5);
  g.queries(0, 0) = -2.0;
  AdamState adam = InitAdam(p);
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  const double p0 = p.queries(0, 0);
  const double p1 = p.queries(1, 1);
  const double d0 = p.decoder_proj.weight(0, 0);
  AdamWUpdate(p, g, adam, cfg);
  // First step: m_hat = g, v_hat = g^2, so the update is lr * (sign(g) + wd * p).
  const double eps_term0 = 2.0 / (2.0 + cfg.adam_eps);
  EXPECT_NEAR(p.queries(0, 0), p0 - 0.1 * (-eps_term0 + 0.01 * p0), 1e-15);
  EXPECT_NEAR(p.queries(1, 1), p1 - 0.1 * (0.5 / (0.5 + cfg.adam_eps) + 0.01 * p1), 1e-15);
  EXPECT_EQ(adam.t, 1);
  // Zero-gradient entries only decay.
  EXPECT_NEAR(p.decoder_proj.weight(0, 0), d0 * (1.0 - 0.1 * 0.01), 1e-15);
}

TEST(AdamWTest, ZeroLearningRateIsBitIdentical) {
  auto state = InitQFormer(TinyModelConfig().qformer, 2);
  const QFormerParams before = state.params;
  QFormerParams g = ZerosLike(state.params);
  VisitTensors(g, "", [](const std::string&, Matrix& t) { t.setConstant(0.3); });
  AdamState adam = InitAdam(state.params);
  TrainConfig cfg;
  cfg.lr = 0.0;
  AdamWUpdate(state.params, g, adam, cfg);
  EXPECT_TRUE(SameParams(state.params, before));
}

TEST(ClipTest, ScalesToMaxNorm) {
  auto state = InitQFormer(TinyModelConfig().qformer, 3);
  QFormerParams g = ZerosLike(state.params);
  g.queries(0, 0) = 3.0;
  g.decoder_proj.bias(0, 0) = 4.0;
  EXPECT_DOUBLE_EQ(ClipGradNorm(g, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(g.queries(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(ClipGradNorm(g, 1.0), 5.0);
  EXPECT_NEAR(g.queries(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(g.decoder_proj.bias(0, 0), 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(ClipGradNorm(g, 0.0), 1.0);
}

TEST(MakeBatchesTest, EveryBatchMixesLabels) {
  std::vector<int> labels;
  for (int c = 0; c < 7; ++c) {
    for (int i = 0; i < 5 + c; ++i) labels.push_back(c);
  }
  const auto plan = MakeBatches(labels, 4, 1000, 17);
  ASSERT_EQ(plan.batches.size(), 1000u);
  EXPECT_FALSE(plan.single_label);
  for (const auto& b : plan.batches) {
    ASSERT_EQ(b.size(), 4u);
    std::set<int> seen;
    for (size_t i : b) seen.insert(labels[i]);
    EXPECT_GE(seen.size(), 2u);
  }
}

TEST(MakeBatchesTest, DeterministicInSeed) {
  std::vector<int> labels = {0, 0, 1, 1, 2, 2, 3, 3, 3};
  const auto a = MakeBatches(labels, 3, 50, 5);
  const auto b = MakeBatches(labels, 3, 50, 5);
  const auto c = MakeBatches(labels, 3, 50, 6);
  EXPECT_EQ(a.batches, b.batches);
  EXPECT_NE(a.batches, c.batches);
}

TEST(MakeBatchesTest, SingleLabelPoolIsFlagged) {
  std::vector<int> labels(6, 2);
  const auto plan = MakeBatches(labels, 3, 4, 1);
  EXPECT_TRUE(plan.single_label);
  EXPECT_EQ(plan.batches.size(), 4u);
  EXPECT_THROW(MakeBatches(labels, 7, 1, 1), ValidationError);
  EXPECT_THROW(MakeBatches(labels, 1, 1, 1), ValidationError);
}

TEST_F(TrainerFixture, StageFiltersSelectDisjointRows) {
  const TrainConfig cfg;
  const auto s1 = SelectStageRows(corpus_->manifest, 1, cfg);
  const auto s2 = SelectStageRows(corpus_->manifest, 2, cfg);
  EXPECT_EQ(s1.size(), 12u);
  EXPECT_EQ(s2.size(), 12u);
  for (size_t r : s1) {
    EXPECT_EQ(corpus_->manifest.entries[r].language.code(), "en");
    EXPECT_EQ(std::count(s2.begin(), s2.end(), r), 0);
  }
  TrainConfig excl = cfg;
  excl.exclude_languages = {"fr"};
  EXPECT_TRUE(SelectStageRows(corpus_->manifest, 2, excl).empty());
  EXPECT_THROW(SelectStageRows(corpus_->manifest, 3, cfg), ValidationError);
}

TEST_F(TrainerFixture, BatchLossMatchesComponents) {
  const Models models(TinyModelConfig());
  const std::vector<size_t> rows = {0, 3, 6, 9};
  const auto feats = Pointers(*bank_, rows);
  const auto labels = LabelsOf(*bank_, rows);
  LossConfig loss;
  loss.lambda = 0.5;
  const BatchLoss with = ComputeBatchLoss(models, feats, labels, loss, true, nullptr);
  const BatchLoss without = ComputeBatchLoss(models, feats, labels, loss, false, nullptr);
  EXPECT_NEAR(with.total, with.lec + 0.5 * with.ce, 1e-12);
  EXPECT_NEAR(without.total, 0.5 * without.ce, 1e-12);
  EXPECT_EQ(with.embeddings.rows(), 4);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(with.embeddings.row(i).norm(), 1.0, 1e-12);
  EXPECT_NEAR(with.lec, ContrastiveLoss(with.embeddings, labels, loss).loss, 1e-12);
}

TEST_F(TrainerFixture, GradCheckOnMixedBatch) {
  const Models models(TinyModelConfig());
  const std::vector<size_t> rows = {0, 1, 3, 15};
  const auto feats = Pointers(*bank_, rows);
  const auto labels = LabelsOf(*bank_, rows);
  const auto report = GradCheck(models, feats, labels, LossConfig{}, true, 1e-5, 1e-6);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_EQ(report.entries.size(), [&] {
    size_t n = 0;
    VisitTensors(models.qformer.params, "", [&](const std::string&, const Matrix&) { ++n; });
    return n;
  }());
  EXPECT_THROW(GradCheck(models, feats, labels, LossConfig{}, true, 0.0, 1e-6),
               ValidationError);
}

TEST_F(TrainerFixture, ZeroLossConfigurationHasVanishingGradients) {
  const Models models(TinyModelConfig());
  const std::vector<const Matrix*> feats(3, &bank_->features[0]);
  const std::vector<int> labels(3, bank_->labels[0]);
  LossConfig loss;
  loss.lambda = 0.0;
  const auto report = GradCheck(models, feats, labels, loss, true, 1e-5, 1e-6);
  EXPECT_NEAR(report.loss, 0.0, 1e-12);
  for (const auto& e : report.entries) {
    EXPECT_LT(e.max_abs_analytic, 1e-9) << e.tensor;
    EXPECT_LT(e.max_abs_error, 1e-9) << e.tensor;
  }
}

TEST_F(TrainerFixture, RepeatedStepsOnOneBatchReduceLoss) {
  Models models(TinyModelConfig());
  AdamState adam = InitAdam(models.qformer.params);
  const std::vector<size_t> rows = {0, 3, 6, 9};
  const auto feats = Pointers(*bank_, rows);
  const auto labels = LabelsOf(*bank_, rows);
  TrainConfig cfg;
  cfg.lr = 1e-4;
  const uint64_t enc = models.encoder.ComputeChecksum();
  const uint64_t dec = models.decoder.ComputeChecksum();
  std::vector<double> totals;
  for (int s = 0; s < 51; ++s) totals.push_back(TrainStep(models, adam, feats, labels, cfg, s).total);
  int decreases = 0;
  for (size_t i = 1; i < totals.size(); ++i) decreases += totals[i] < totals[i - 1];
  std::string trace;
  for (double t : totals) trace += std::to_string(t) + " ";
  EXPECT_GE(decreases, 45) << trace;
  EXPECT_EQ(models.encoder.ComputeChecksum(), enc);
  EXPECT_EQ(models.decoder.ComputeChecksum(), dec);
}

TEST_F(TrainerFixture, ZeroStepsKeepsParametersAndBumpsStage) {
  TrainingState init(TinyModelConfig());
  const uint64_t before = ParamChecksum(init.models.qformer.params);
  TrainConfig cfg = SmallTrain();
  cfg.steps = 0;
  const auto r = TrainStage(1, corpus_->manifest, *bank_, cfg, init);
  EXPECT_EQ(ParamChecksum(r.state.models.qformer.params), before);
  EXPECT_EQ(r.state.stage, 1);
  EXPECT_EQ(r.state.step, 0);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.state.seen_datasets, std::vector<std::string>{"desk-en"});
  EXPECT_EQ(r.state.seen_languages, std::vector<std::string>{"en"});
}

TEST_F(TrainerFixture, StageTwoOfTwoStageNeedsStageOne) {
  TrainingState init(TinyModelConfig());
  EXPECT_THROW(TrainStage(2, corpus_->manifest, *bank_, SmallTrain(), init), ValidationError);
  TrainConfig single = SmallTrain();
  single.two_stage = false;
  EXPECT_NO_THROW(TrainStage(2, corpus_->manifest, *bank_, single, init));
}

TEST_F(TrainerFixture, TrainStageIsDeterministicAndKeepsFrozenModules) {
  TrainingState init(TinyModelConfig());
  const uint64_t enc = init.models.encoder.checksum();
  const uint64_t dec = init.models.decoder.checksum();
  TrainConfig cfg = SmallTrain();
  cfg.eval_every = 2;
  int hook_calls = 0;
  auto hook = [&](const Models&) {
    ++hook_calls;
    return EvalPoint{0, 0.5, 0.25};
  };
  const auto a = TrainStage(1, corpus_->manifest, *bank_, cfg, init, hook);
  const auto b = TrainStage(1, corpus_->manifest, *bank_, cfg, init);
  EXPECT_TRUE(SameParams(a.state.models.qformer.params, b.state.models.qformer.params));
  EXPECT_FALSE(SameParams(a.state.models.qformer.params, init.models.qformer.params));
  EXPECT_EQ(StepLogToJsonl(a.log), StepLogToJsonl(b.log));
  EXPECT_EQ(a.state.step, 5);
  EXPECT_EQ(a.state.adam.t, 5);
  EXPECT_EQ(hook_calls, 2);
  ASSERT_EQ(a.evals.size(), 2u);
  EXPECT_EQ(a.evals[1].step, 4);
  EXPECT_EQ(a.state.models.encoder.ComputeChecksum(), enc);
  EXPECT_EQ(a.state.models.decoder.ComputeChecksum(), dec);

  const auto two = TrainStage(2, corpus_->manifest, *bank_, cfg, a.state);
  EXPECT_EQ(two.state.stage, 2);
  EXPECT_EQ(two.state.step, 10);
  EXPECT_EQ(two.state.seen_languages, (std::vector<std::string>{"en", "fr"}));
}

TEST_F(TrainerFixture, FeatureBankIndependentOfThreads) {
  const Models models(TinyModelConfig());
  const FeatureBank three =
      BuildFeatureBank(models, corpus_->manifest, MemoryLoader(*corpus_), 3);
  ASSERT_EQ(three.features.size(), bank_->features.size());
  for (size_t i = 0; i < three.features.size(); ++i) {
    EXPECT_EQ(three.features[i], bank_->features[i]);
  }
  EXPECT_EQ(three.labels, bank_->labels);
}

TEST(StepLogTest, JsonlLines) {
  const std::string out = StepLogToJsonl({{1, 0.5, 2.0, 2.5}, {2, 0.0, 1.0, 1.0}});
  EXPECT_EQ(out,
            "{\"ce\":2.0,\"lec\":0.5,\"step\":1,\"total\":2.5}\n"
            "{\"ce\":1.0,\"lec\":0.0,\"step\":2,\"total\":1.0}\n");
}

}  // namespace
}  // namespace emoalign
