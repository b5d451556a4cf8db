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

#include "emoalign/config.h"

#include <fstream>
#include <string>

#include "gtest/gtest.h"

#include "test_util.h"

namespace emoalign {
namespace {

std::string ErrorOf(const std::string& toml) {
  try {
    RunConfig::FromToml(toml);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, EmptyTomlIsDefaults) {
  EXPECT_EQ(RunConfig::FromToml("").ToJson(), RunConfig::Defaults().ToJson());
}

TEST(ConfigTest, DefaultsDescribeTheDeskCorpus) {
  const RunConfig c = RunConfig::Defaults();
  EXPECT_NO_THROW(c.Validate());
  EXPECT_EQ(c.preset, "desk");
  EXPECT_EQ(c.synth.request.languages.size(), 6u);
  EXPECT_EQ(c.synth.request.emotions.size(), 7u);
  EXPECT_EQ(c.synth.request.per_cell, 60);
  EXPECT_EQ(c.train.exclude_languages, std::vector<std::string>{"es"});
  EXPECT_EQ(c.eval.heldout_languages, std::vector<std::string>{"es"});
  EXPECT_DOUBLE_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.model.qformer.n_queries, 8);
}

TEST(ConfigTest, PaperPreset) {
  const RunConfig p = RunConfig::FromToml("preset = \"paper\"\n");
  EXPECT_DOUBLE_EQ(p.train.lr, 1e-5);
  EXPECT_DOUBLE_EQ(p.train.weight_decay, 1e-6);
  EXPECT_EQ(p.model.qformer.d_model, 256);
  EXPECT_EQ(p.model.qformer.n_queries, 32);
  EXPECT_EQ(p.ToJson(), RunConfig::PaperPreset().ToJson());
  EXPECT_NE(ErrorOf("preset = \"huge\"\n").find("preset"), std::string::npos);
}

TEST(ConfigTest, SectionsOverrideFields) {
  const RunConfig c = RunConfig::FromToml(R"(
[frontend]
n_mels = 32
window = "rectangular"
[encoder]
d_model = 32
[qformer]
n_queries = 4
init_seed = 77
[loss]
margin = 0.3
reduction = "mean"
[train]
steps = 12
batch_size = 6
[train.stage1]
synthetic = "any"
languages = ["en", "fr"]
[eval]
classes = 4
ablation_seeds = [9, 10]
[synth]
per_cell = 3
languages = ["en", "el"]
[synth.prosody.happy]
base_f0_hz = 260.0
[filter]
min_duration_s = 0.25
)");
  EXPECT_EQ(c.model.frontend.n_mels, 32);
  EXPECT_EQ(c.model.encoder.n_mels, 32);  // resolved from the frontend
  EXPECT_EQ(c.model.frontend.window, WindowType::kRectangular);
  EXPECT_EQ(c.model.qformer.d_encoder, 32);
  EXPECT_EQ(c.model.qformer.n_queries, 4);
  EXPECT_EQ(c.model.qformer_seed, 77u);
  EXPECT_DOUBLE_EQ(c.train.loss.margin, 0.3);
  EXPECT_EQ(c.train.loss.reduction, PairReduction::kMean);
  EXPECT_EQ(c.train.steps, 12);
  EXPECT_FALSE(c.train.stage1.synthetic.has_value());
  EXPECT_EQ(c.train.stage1.languages, (std::vector<std::string>{"en", "fr"}));
  EXPECT_EQ(c.eval.classes, 4);
  EXPECT_EQ(c.eval.ablation_seeds, (std::vector<uint64_t>{9, 10}));
  EXPECT_EQ(c.synth.request.languages.size(), 2u);
  EXPECT_DOUBLE_EQ(c.synth.profile.prosody[Code(Emotion::kHappy)].base_f0_hz, 260.0);
  EXPECT_DOUBLE_EQ(c.filter.min_duration_s, 0.25);
}

TEST(ConfigTest, UnknownKeysNameTheirPath) {
  EXPECT_NE(ErrorOf("[train]\nlearning_rate = 0.1\n").find("train.learning_rate"),
            std::string::npos);
  EXPECT_NE(ErrorOf("[bogus]\nx = 1\n").find("bogus"), std::string::npos);
  EXPECT_NE(ErrorOf("[train.stage2]\nlang = []\n").find("train.stage2.lang"),
            std::string::npos);
}

TEST(ConfigTest, TypeAndRangeErrors) {
  EXPECT_NE(ErrorOf("[train]\nsteps = \"ten\"\n").find("train.steps"), std::string::npos);
  EXPECT_NE(ErrorOf("[eval]\nclasses = 5\n").find("classes"), std::string::npos);
  EXPECT_NE(ErrorOf("[train]\nbatch_size = 1\n"), "");
  EXPECT_NE(ErrorOf("[loss]\nmargin = 3.0\n"), "");
  EXPECT_NE(ErrorOf("[encoder]\nd_model = 63\n"), "");
  EXPECT_NE(ErrorOf("[synth]\nsplit_train = 0.5\n"), "");
  EXPECT_NE(ErrorOf("[train]\nstage1 = { synthetic = 3 }\n").find("train.stage1.synthetic"),
            std::string::npos);
}

TEST(ConfigTest, MalformedTomlReportsLocation) {
  const std::string err = ErrorOf("[train]\nsteps = = 4\n");
  EXPECT_NE(err.find("line 2"), std::string::npos) << err;
}

TEST(ConfigTest, JsonRoundTrip) {
  RunConfig c = RunConfig::FromToml("[train]\nsteps = 7\n[synth]\nper_cell = 2\n");
  const std::string j = c.ToJson();
  EXPECT_EQ(RunConfig::FromJson(j).ToJson(), j);
  EXPECT_EQ(RunConfig::PaperPreset().ToJson(),
            RunConfig::FromJson(RunConfig::PaperPreset().ToJson()).ToJson());
  EXPECT_THROW(RunConfig::FromJson("{not json"), ValidationError);
}

TEST(ConfigTest, LoadTomlFromFile) {
  const std::string dir = testing::ScratchDir("config_test");
  const std::string path = dir + "/run.toml";
  std::ofstream(path) << "[train]\nsteps = 3\n";
  EXPECT_EQ(RunConfig::LoadToml(path).train.steps, 3);
  EXPECT_THROW(RunConfig::LoadToml(dir + "/missing.toml"), ValidationError);
}

TEST(ConfigTest, ModelConfigRoundTrip) {
  ModelConfig m = testing::TinyModelConfig();
  m.Resolve();
  const ModelConfig back = ModelConfigFromJson(ModelConfigToJson(m));
  EXPECT_EQ(ModelConfigToJson(back), ModelConfigToJson(m));
  EXPECT_EQ(back.qformer_seed, m.qformer_seed);
  EXPECT_EQ(back.encoder.max_frames, 16);
}

}  // namespace
}  // namespace emoalign
