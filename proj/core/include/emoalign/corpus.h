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

#ifndef EMOALIGN_CORPUS_H_
#define EMOALIGN_CORPUS_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emoalign/common.h"

namespace emoalign {

// Stable integer codes; the order is part of the on-disk contract.
enum class Emotion : int {
  kNeutral = 0,
  kHappy = 1,
  kSad = 2,
  kAngry = 3,
  kSurprise = 4,
  kDisgust = 5,
  kFear = 6,
};

inline constexpr int kNumEmotions = 7;

inline constexpr std::array<Emotion, kNumEmotions> kAllEmotions = {
    Emotion::kNeutral,  Emotion::kHappy,   Emotion::kSad, Emotion::kAngry,
    Emotion::kSurprise, Emotion::kDisgust, Emotion::kFear};

constexpr int Code(Emotion e) { return static_cast<int>(e); }
std::string_view EmotionName(Emotion e);
Emotion EmotionFromCode(int code);
// Throws ValidationError naming the token.
Emotion ParseEmotion(std::string_view token);

// {en, fr, de, it, zh, es} are the built-in languages; any other lowercase
// ISO-style code (el, ru, fa, ...) is carried as an "other" tag.
class LanguageTag {
 public:
  LanguageTag() = default;
  static LanguageTag Parse(std::string_view code);

  const std::string& code() const { return code_; }
  bool is_builtin() const;

  friend auto operator<=>(const LanguageTag&, const LanguageTag&) = default;

 private:
  explicit LanguageTag(std::string code) : code_(std::move(code)) {}
  std::string code_ = "en";
};

inline const std::array<std::string_view, 6> kBuiltinLanguages = {
    "en", "fr", "de", "it", "zh", "es"};

enum class Split { kTrain, kDev, kTest };
std::string_view SplitName(Split s);
Split ParseSplit(std::string_view token);

struct Utterance {
  std::string id;
  std::string audio_path;
  int sample_rate = 16000;
  double duration_s = 0.0;
  int64_t size_bytes = 0;
  LanguageTag language;
  Emotion emotion = Emotion::kNeutral;
  std::string dataset;
  Split split = Split::kTrain;
  bool synthetic = false;
};

struct Manifest {
  std::vector<Utterance> entries;
  std::string provenance;
};

// JSONL, one record per line, fields exactly
// {id, audio_path, sample_rate, duration_s, size_bytes, language, emotion,
//  dataset, split, synthetic}. Blank lines are skipped.
Manifest LoadManifest(const std::string& path);
Manifest ParseManifest(std::string_view text, std::string_view source_name);
std::string SerializeManifest(const Manifest& m);
void SaveManifest(const Manifest& m, const std::string& path);

std::string UtteranceToJsonLine(const Utterance& u);

enum class UnknownDatasetBehavior { kKeep, kApplyGroup };

struct SizeGroup {
  int64_t threshold_bytes = 0;
  std::vector<std::string> datasets;
};

// Duration and size rules for generated audio. Dataset names are matched
// case-insensitively. Thresholds use binary kilobytes.
struct FilterPolicy {
  double min_duration_s = 0.5;
  std::map<std::string, SizeGroup> size_groups = {
      {"small", {20 * 1024, {"IEMOCAP", "MELD"}}},
      {"large", {50 * 1024, {"MEAD", "MOSEI", "MSP"}}},
  };
  UnknownDatasetBehavior unknown_dataset = UnknownDatasetBehavior::kKeep;

  void Validate() const;
  // Group name for a dataset, if any.
  std::optional<std::string> GroupOf(std::string_view dataset) const;
};

struct FilterReport {
  int64_t input = 0;
  int64_t kept = 0;
  // An utterance failing both rules is attributed to the duration rule, so
  // rejected_duration + rejected_size equals the number rejected.
  int64_t rejected_duration = 0;
  int64_t rejected_size = 0;

  std::string ToJson() const;
};

struct FilterResult {
  Manifest kept;
  Manifest rejected;
  FilterReport report;
};

FilterResult ApplyFilterPolicy(const Manifest& m, const FilterPolicy& policy);

struct StatsCell {
  std::string language;
  std::string emotion;
  std::string dataset;
  int64_t count = 0;
  double duration_s = 0.0;
};

struct CorpusStats {
  int64_t total_count = 0;
  double total_duration_s = 0.0;
  // Sorted by (language, emotion code, dataset).
  std::vector<StatsCell> cells;
  std::map<std::string, int64_t> by_language;
  std::array<int64_t, kNumEmotions> by_emotion{};

  int64_t Count(std::string_view language, Emotion emotion) const;
  std::string ToJson() const;
};

CorpusStats ComputeCorpusStats(const Manifest& m);

struct SplitFractions {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

// Stratified by (language, emotion). Per stratum: dev = floor(n * dev),
// test = floor(n * test), remainder to train. Strata with at least three
// items give at least one item to every split with a positive fraction.
Manifest AssignSplits(const Manifest& m, const SplitFractions& fractions,
                      uint64_t seed);

}  // namespace emoalign

#endif  // EMOALIGN_CORPUS_H_
