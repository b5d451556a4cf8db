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

#include "emoalign/checkpoint.h"

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoalign/config.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace emoalign {
namespace {

using testing::TinyModelConfig;

TrainingState SampleState() {
  ModelConfig mc = TinyModelConfig();
  mc.Resolve();
  TrainingState s = FreshState(RunConfig::Defaults().ToJson(), mc, 42);
  s.stage = 1;
  s.step = 17;
  s.adam.t = 17;
  s.adam.m.queries.setConstant(0.25);
  s.adam.v.decoder_proj.bias.setConstant(1e-300);
  s.models.qformer.params.queries(0, 0) = -0.0;
  s.seen_datasets = {"desk-en"};
  s.seen_languages = {"en"};
  return s;
}

nlohmann::json Header(const std::vector<uint8_t>& bytes) {
  uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  return nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + len);
}

TEST(CheckpointTest, SerializeLoadSerializeIsByteIdentical) {
  const TrainingState s = SampleState();
  const auto bytes = SerializeCheckpoint(s);
  const TrainingState back = DeserializeCheckpoint(bytes);
  EXPECT_EQ(SerializeCheckpoint(back), bytes);
  EXPECT_EQ(back.stage, 1);
  EXPECT_EQ(back.step, 17);
  EXPECT_EQ(back.adam.t, 17);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.seen_datasets, s.seen_datasets);
  EXPECT_EQ(back.config_json, s.config_json);
  EXPECT_EQ(ParamChecksum(back.models.qformer.params), ParamChecksum(s.models.qformer.params));
  EXPECT_EQ(back.models.encoder.checksum(), s.models.encoder.checksum());
  EXPECT_EQ(back.models.decoder.checksum(), s.models.decoder.checksum());
  EXPECT_TRUE(std::signbit(back.models.qformer.params.queries(0, 0)));
}

TEST(CheckpointTest, HeaderLayout) {
  const auto bytes = SerializeCheckpoint(SampleState());
  ASSERT_GT(bytes.size(), 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "EMAL");
  uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, sizeof(version));
  EXPECT_EQ(version, kCheckpointVersion);
  const auto h = Header(bytes);
  for (const char* key : {"version", "config", "model", "stage", "step", "seed", "adam_t",
                          "seen_datasets", "seen_languages", "checksums", "tensors"}) {
    EXPECT_TRUE(h.contains(key)) << key;
  }
  EXPECT_EQ(h["seed"], 42);
  EXPECT_EQ(h["config"]["preset"], "desk");
  size_t floats = 0;
  std::string first_prefix;
  for (const auto& t : h["tensors"]) {
    floats += t["rows"].get<size_t>() * t["cols"].get<size_t>();
    if (first_prefix.empty()) first_prefix = t["name"].get<std::string>().substr(0, 8);
  }
  EXPECT_EQ(first_prefix, "encoder.");
  uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  EXPECT_EQ(bytes.size(), 16 + len + 8 * floats);
}

TEST(CheckpointTest, RejectsCorruption) {
  const auto good = SerializeCheckpoint(SampleState());
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(DeserializeCheckpoint(bad_magic), ValidationError);
  auto truncated = good;
  truncated.resize(good.size() - 8);
  EXPECT_THROW(DeserializeCheckpoint(truncated), ValidationError);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(DeserializeCheckpoint(trailing), ValidationError);
  // Flip a byte inside the first (encoder) tensor: the frozen digest no longer matches.
  auto tampered = good;
  uint64_t len = 0;
  std::memcpy(&len, good.data() + 8, sizeof(len));
  tampered[16 + len + 3] ^= 0x40;
  EXPECT_THROW(DeserializeCheckpoint(tampered), ValidationError);
  EXPECT_THROW(DeserializeCheckpoint(std::vector<uint8_t>{}), ValidationError);
}

TEST(CheckpointTest, SaveAndLoadFiles) {
  const std::string dir = testing::ScratchDir("checkpoint_test");
  const std::string path = dir + "/nested/state.ckpt";
  const TrainingState s = SampleState();
  SaveCheckpoint(s, path);
  ASSERT_TRUE(std::filesystem::exists(path));
  const TrainingState back = LoadCheckpoint(path);
  EXPECT_EQ(SerializeCheckpoint(back), SerializeCheckpoint(s));
  SaveCheckpoint(back, dir + "/again.ckpt");
  EXPECT_EQ(std::filesystem::file_size(path), std::filesystem::file_size(dir + "/again.ckpt"));
  EXPECT_THROW(LoadCheckpoint(dir + "/missing.ckpt"), ValidationError);
}

TEST(CheckpointTest, FreshStateIsStageZero) {
  ModelConfig mc = TinyModelConfig();
  mc.Resolve();
  const TrainingState a = FreshState("{}", mc, 3);
  const TrainingState b = FreshState("{}", mc, 3);
  EXPECT_EQ(a.stage, 0);
  EXPECT_EQ(a.step, 0);
  EXPECT_EQ(SerializeCheckpoint(a), SerializeCheckpoint(b));
}

}  // namespace
}  // namespace emoalign
