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

#include "emoalign/corpus.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "emoalign/synth.h"
#include "gtest/gtest.h"

namespace emoalign {
namespace {

Utterance Make(std::string id, double duration, int64_t size, std::string dataset,
               std::string lang = "en", Emotion emo = Emotion::kNeutral) {
  Utterance u;
  u.id = std::move(id);
  u.audio_path = u.id + ".wav";
  u.duration_s = duration;
  u.size_bytes = size;
  u.dataset = std::move(dataset);
  u.language = LanguageTag::Parse(lang);
  u.emotion = emo;
  return u;
}

TEST(EmotionTest, RoundTripsTextAndCode) {
  EXPECT_EQ(kAllEmotions.size(), 7u);
  for (Emotion e : kAllEmotions) {
    EXPECT_EQ(ParseEmotion(EmotionName(e)), e);
    EXPECT_EQ(EmotionFromCode(Code(e)), e);
  }
  EXPECT_EQ(Code(Emotion::kNeutral), 0);
  EXPECT_EQ(Code(Emotion::kFear), 6);
  EXPECT_THROW(ParseEmotion("joy"), ValidationError);
  EXPECT_THROW(EmotionFromCode(7), ValidationError);
}

TEST(LanguageTagTest, BuiltinsAndOtherCodes) {
  for (auto code : kBuiltinLanguages) {
    EXPECT_TRUE(LanguageTag::Parse(code).is_builtin());
  }
  const LanguageTag el = LanguageTag::Parse("el");
  EXPECT_FALSE(el.is_builtin());
  EXPECT_EQ(el.code(), "el");
  EXPECT_THROW(LanguageTag::Parse(""), ValidationError);
  EXPECT_THROW(LanguageTag::Parse("EN"), ValidationError);
}

TEST(ManifestTest, EmptyTextGivesEmptyManifest) {
  EXPECT_TRUE(ParseManifest("", "empty").entries.empty());
}

TEST(ManifestTest, PreservesFileOrder) {
  Manifest m;
  m.entries = {Make("c", 1, 100, "x"), Make("a", 1, 100, "x"), Make("b", 1, 100, "x")};
  const Manifest back = ParseManifest(SerializeManifest(m), "mem");
  ASSERT_EQ(back.entries.size(), 3u);
  EXPECT_EQ(back.entries[0].id, "c");
  EXPECT_EQ(back.entries[1].id, "a");
  EXPECT_EQ(back.entries[2].id, "b");
  EXPECT_EQ(SerializeManifest(back), SerializeManifest(m));
}

TEST(ManifestTest, UnknownEmotionNamesLineAndToken) {
  Manifest m;
  m.entries = {Make("a", 1, 100, "x"), Make("b", 1, 100, "x")};
  std::string text = SerializeManifest(m);
  const auto pos = text.rfind("\"neutral\"");
  text.replace(pos, 9, "\"joy\"");
  try {
    ParseManifest(text, "bad.jsonl");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad.jsonl:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("joy"), std::string::npos) << msg;
  }
}

TEST(ManifestTest, RejectsDuplicatesMalformedAndUnknownFields) {
  Manifest m;
  m.entries = {Make("a", 1, 100, "x"), Make("a", 1, 100, "x")};
  EXPECT_THROW(ParseManifest(SerializeManifest(m), "dup"), ValidationError);
  EXPECT_THROW(ParseManifest("{not json}\n", "bad"), ValidationError);
  std::string line = UtteranceToJsonLine(Make("a", 1, 100, "x"));
  line.insert(1, "\"extra\":1,");
  EXPECT_THROW(ParseManifest(line, "extra"), ValidationError);
  EXPECT_THROW(LoadManifest("/nonexistent/manifest.jsonl"), ValidationError);
}

TEST(FilterTest, DurationRule) {
  Manifest m;
  m.entries = {Make("short", 0.4, 100000, "MEAD")};
  const FilterResult r = ApplyFilterPolicy(m, FilterPolicy{});
  EXPECT_EQ(r.rejected.entries.size(), 1u);
  EXPECT_EQ(r.report.rejected_duration, 1);
}

TEST(FilterTest, SmallGroupSizeRule) {
  Manifest m;
  m.entries = {Make("iemocap", 1.0, 19456, "IEMOCAP")};
  const FilterResult r = ApplyFilterPolicy(m, FilterPolicy{});
  EXPECT_EQ(r.rejected.entries.size(), 1u);
  EXPECT_EQ(r.report.rejected_size, 1);
}

TEST(FilterTest, LargeGroupAboveThresholdKept) {
  Manifest m;
  m.entries = {Make("mead", 1.0, 51300, "MEAD")};
  EXPECT_EQ(ApplyFilterPolicy(m, FilterPolicy{}).kept.entries.size(), 1u);
}

TEST(FilterTest, BoundariesAreStrict) {
  Manifest m;
  m.entries = {Make("d49", 0.49, 1 << 20, "MEAD"), Make("d50", 0.50, 1 << 20, "MEAD"),
               Make("d51", 0.51, 1 << 20, "MEAD"), Make("s79", 1, 20479, "MELD"),
               Make("s80", 1, 20480, "meld"),       Make("s81", 1, 20481, "IEMOCAP"),
               Make("l99", 1, 51199, "MSP"),        Make("l00", 1, 51200, "MOSEI"),
               Make("l01", 1, 51201, "MEAD"),       Make("other", 1, 10, "RAVDESS")};
  const FilterResult r = ApplyFilterPolicy(m, FilterPolicy{});
  std::set<std::string> rejected;
  for (const auto& u : r.rejected.entries) rejected.insert(u.id);
  EXPECT_EQ(rejected, (std::set<std::string>{"d49", "s79", "l99"}));
  EXPECT_EQ(r.report.input, 10);
  EXPECT_EQ(r.report.kept, 7);
  EXPECT_EQ(r.report.rejected_duration + r.report.rejected_size, 3);
}

TEST(FilterTest, PartitionPreservesOrderAndIsIdempotent) {
  Manifest m;
  for (int i = 0; i < 20; ++i) {
    m.entries.push_back(Make("u" + std::to_string(i), 0.1 * i, 1000 * i * 5, "MEAD"));
  }
  const FilterResult r = ApplyFilterPolicy(m, FilterPolicy{});
  EXPECT_EQ(r.kept.entries.size() + r.rejected.entries.size(), m.entries.size());
  for (size_t i = 1; i < r.kept.entries.size(); ++i) {
    EXPECT_LT(std::stoi(r.kept.entries[i - 1].id.substr(1)),
              std::stoi(r.kept.entries[i].id.substr(1)));
  }
  EXPECT_TRUE(ApplyFilterPolicy(r.kept, FilterPolicy{}).rejected.entries.empty());
}

TEST(FilterTest, UnknownDatasetBehavior) {
  Manifest m;
  m.entries = {Make("x", 1, 10, "RAVDESS")};
  FilterPolicy p;
  EXPECT_EQ(ApplyFilterPolicy(m, p).kept.entries.size(), 1u);
  p.unknown_dataset = UnknownDatasetBehavior::kApplyGroup;
  EXPECT_THROW(ApplyFilterPolicy(m, p), ValidationError);
}

TEST(FilterTest, PolicyValidation) {
  FilterPolicy p;
  p.size_groups["extra"] = {100, {"meld"}};
  EXPECT_THROW(p.Validate(), ValidationError);
  FilterPolicy q;
  q.size_groups["small"].threshold_bytes = -1;
  EXPECT_THROW(q.Validate(), ValidationError);
}

TEST(StatsTest, EmptyManifest) {
  const CorpusStats s = ComputeCorpusStats(Manifest{});
  EXPECT_EQ(s.total_count, 0);
  EXPECT_EQ(s.total_duration_s, 0.0);
  EXPECT_TRUE(s.cells.empty());
}

TEST(StatsTest, CountsAndDurations) {
  Manifest m;
  m.entries = {Make("a", 1.0, 1, "d", "en", Emotion::kHappy),
               Make("b", 2.0, 1, "d", "en", Emotion::kHappy),
               Make("c", 3.0, 1, "d", "fr", Emotion::kSad)};
  const CorpusStats s = ComputeCorpusStats(m);
  EXPECT_EQ(s.Count("en", Emotion::kHappy), 2);
  EXPECT_EQ(s.Count("fr", Emotion::kSad), 1);
  EXPECT_EQ(s.Count("fr", Emotion::kHappy), 0);
  EXPECT_DOUBLE_EQ(s.total_duration_s, 6.0);
  int64_t sum = 0;
  for (const auto& c : s.cells) sum += c.count;
  EXPECT_EQ(sum, 3);
}

Manifest Strata(int per_stratum) {
  Manifest m;
  for (const char* lang : {"en", "fr"}) {
    for (Emotion e : {Emotion::kHappy, Emotion::kSad}) {
      for (int i = 0; i < per_stratum; ++i) {
        m.entries.push_back(Make(std::string(lang) + std::string(EmotionName(e)) +
                                     std::to_string(i),
                                 1, 1, "d", lang, e));
      }
    }
  }
  return m;
}

TEST(SplitTest, EightOneOnePerStratum) {
  const Manifest m = AssignSplits(Strata(10), SplitFractions{}, 3);
  std::map<std::pair<std::string, int>, std::array<int, 3>> counts;
  for (const auto& u : m.entries) {
    ++counts[{u.language.code(), Code(u.emotion)}][static_cast<int>(u.split)];
  }
  ASSERT_EQ(counts.size(), 4u);
  for (const auto& [key, c] : counts) {
    EXPECT_EQ(c[0], 8);
    EXPECT_EQ(c[1], 1);
    EXPECT_EQ(c[2], 1);
  }
}

TEST(SplitTest, DegenerateAndDeterministic) {
  const Manifest all_train = AssignSplits(Strata(5), {1.0, 0.0, 0.0}, 1);
  for (const auto& u : all_train.entries) EXPECT_EQ(u.split, Split::kTrain);
  EXPECT_EQ(SerializeManifest(AssignSplits(Strata(7), {}, 9)),
            SerializeManifest(AssignSplits(Strata(7), {}, 9)));
  EXPECT_THROW(AssignSplits(Strata(3), {0.5, 0.2, 0.2}, 1), ValidationError);
}

TEST(SplitTest, SmallStrataReachEverySplit) {
  const Manifest m = AssignSplits(Strata(3), SplitFractions{}, 4);
  std::map<std::pair<std::string, int>, std::set<Split>> seen;
  for (const auto& u : m.entries) seen[{u.language.code(), Code(u.emotion)}].insert(u.split);
  for (const auto& [key, splits] : seen) EXPECT_EQ(splits.size(), 3u);
}

TEST(SynthTest, CountsDeterminismAndFilterCompatibility) {
  const SynthesisProfile p = SynthesisProfile::Default();
  SynthRequest req;
  req.languages = {LanguageTag::Parse("en"), LanguageTag::Parse("fr")};
  req.emotions.assign(kAllEmotions.begin(), kAllEmotions.end());
  req.per_cell = 10;
  req.min_duration_s = 0.5;
  req.max_duration_s = 0.8;
  const SynthCorpus a = SynthGenerate(p, req);
  EXPECT_EQ(a.manifest.entries.size(), 140u);
  for (const auto& u : a.manifest.entries) {
    EXPECT_TRUE(u.synthetic);
    EXPECT_GE(u.duration_s, 0.5);
  }
  const SynthCorpus b = SynthGenerate(p, req, 3);
  EXPECT_EQ(SerializeManifest(a.manifest), SerializeManifest(b.manifest));
  for (size_t i = 0; i < a.waveforms.size(); ++i) {
    ASSERT_EQ(a.waveforms[i].samples, b.waveforms[i].samples);
  }
  EXPECT_TRUE(ApplyFilterPolicy(a.manifest, FilterPolicy{}).rejected.entries.empty());
}

TEST(SynthTest, SameKeyGivesBitIdenticalWaveform) {
  const SynthesisProfile p = SynthesisProfile::Default();
  const auto lang = LanguageTag::Parse("de");
  const Waveform a = SynthesizeUtterance(p, lang, Emotion::kAngry, 3, 16000, 1.0, 1.5);
  const Waveform b = SynthesizeUtterance(p, lang, Emotion::kAngry, 3, 16000, 1.0, 1.5);
  EXPECT_EQ(a.samples, b.samples);
  const Waveform c = SynthesizeUtterance(p, lang, Emotion::kAngry, 4, 16000, 1.0, 1.5);
  EXPECT_NE(a.samples, c.samples);
}

TEST(SynthTest, RejectsEmptyRequests) {
  SynthRequest req;
  req.languages = {LanguageTag::Parse("en")};
  req.emotions = {Emotion::kHappy};
  req.per_cell = 0;
  EXPECT_THROW(SynthGenerate(SynthesisProfile::Default(), req), ValidationError);
  req.per_cell = 1;
  req.emotions.clear();
  EXPECT_THROW(SynthGenerate(SynthesisProfile::Default(), req), ValidationError);
}

TEST(SynthTest, ProfileTuplesAreDistinct) {
  SynthesisProfile p = SynthesisProfile::Default();
  EXPECT_NO_THROW(p.Validate());
  p.prosody[1] = p.prosody[0];
  EXPECT_THROW(p.Validate(), ValidationError);
}

TEST(SynthTest, WritesWavFilesAndManifest) {
  const auto dir = std::filesystem::temp_directory_path() / "emoalign_synth_test";
  std::filesystem::remove_all(dir);
  SynthRequest req;
  req.languages = {LanguageTag::Parse("it")};
  req.emotions = {Emotion::kSad, Emotion::kFear};
  req.per_cell = 2;
  const SynthCorpus c = SynthGenerate(SynthesisProfile::Default(), req);
  WriteSynthCorpus(c, dir.string());
  const Manifest m = LoadManifest((dir / "manifest.jsonl").string());
  ASSERT_EQ(m.entries.size(), 4u);
  for (const auto& u : m.entries) {
    const auto path = dir / u.audio_path;
    ASSERT_TRUE(std::filesystem::exists(path));
    EXPECT_EQ(static_cast<int64_t>(std::filesystem::file_size(path)), u.size_bytes);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace emoalign
