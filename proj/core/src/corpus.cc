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

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "emoalign/rng.h"
#include <nlohmann/json.hpp>

namespace emoalign {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "neutral", "happy", "sad", "angry", "surprise", "disgust", "fear"};

std::string Upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

const std::set<std::string, std::less<>> kManifestFields = {
    "id",      "audio_path", "sample_rate", "duration_s", "size_bytes",
    "language", "emotion",   "dataset",     "split",      "synthetic"};

}  // namespace

std::string_view EmotionName(Emotion e) { return kEmotionNames[Code(e)]; }

Emotion EmotionFromCode(int code) {
  if (code < 0 || code >= kNumEmotions) {
    throw ValidationError("emotion code out of range: " + std::to_string(code));
  }
  return static_cast<Emotion>(code);
}

Emotion ParseEmotion(std::string_view token) {
  for (int i = 0; i < kNumEmotions; ++i) {
    if (kEmotionNames[i] == token) return static_cast<Emotion>(i);
  }
  throw ValidationError("unknown emotion '" + std::string(token) + "'");
}

LanguageTag LanguageTag::Parse(std::string_view code) {
  if (code.empty() || code.size() > 8) {
    throw ValidationError("invalid language code '" + std::string(code) + "'");
  }
  for (char c : code) {
    if (!std::islower(static_cast<unsigned char>(c)) && c != '-') {
      throw ValidationError("invalid language code '" + std::string(code) + "'");
    }
  }
  return LanguageTag(std::string(code));
}

bool LanguageTag::is_builtin() const {
  return std::find(kBuiltinLanguages.begin(), kBuiltinLanguages.end(), code_) !=
         kBuiltinLanguages.end();
}

std::string_view SplitName(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

Split ParseSplit(std::string_view token) {
  if (token == "train") return Split::kTrain;
  if (token == "dev") return Split::kDev;
  if (token == "test") return Split::kTest;
  throw ValidationError("unknown split '" + std::string(token) + "'");
}

namespace {

Utterance UtteranceFromJson(const json& j) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kManifestFields.contains(key)) {
      throw ValidationError("unknown field '" + key + "'");
    }
  }
  for (const auto& field : kManifestFields) {
    if (!j.contains(field)) throw ValidationError("missing field '" + field + "'");
  }
  Utterance u;
  try {
    u.id = j.at("id").get<std::string>();
    u.audio_path = j.at("audio_path").get<std::string>();
    u.sample_rate = j.at("sample_rate").get<int>();
    u.duration_s = j.at("duration_s").get<double>();
    u.size_bytes = j.at("size_bytes").get<int64_t>();
    u.language = LanguageTag::Parse(j.at("language").get<std::string>());
    u.emotion = ParseEmotion(j.at("emotion").get<std::string>());
    u.dataset = j.at("dataset").get<std::string>();
    u.split = ParseSplit(j.at("split").get<std::string>());
    u.synthetic = j.at("synthetic").get<bool>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad field type: ") + e.what());
  }
  if (u.id.empty()) throw ValidationError("empty id");
  if (u.sample_rate <= 0) throw ValidationError("sample_rate must be positive");
  if (!(u.duration_s >= 0.0)) throw ValidationError("duration_s must be >= 0");
  if (u.size_bytes < 0) throw ValidationError("size_bytes must be >= 0");
  return u;
}

}  // namespace

Manifest ParseManifest(std::string_view text, std::string_view source_name) {
  Manifest m;
  m.provenance = std::string(source_name);
  std::set<std::string, std::less<>> ids;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    const std::string where =
        std::string(source_name) + ":" + std::to_string(line_no) + ": ";
    Utterance u;
    try {
      u = UtteranceFromJson(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ValidationError(where + "malformed JSON: " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    if (!ids.insert(u.id).second) {
      throw ValidationError(where + "duplicate id '" + u.id + "'");
    }
    m.entries.push_back(std::move(u));
    if (end == text.size()) break;
  }
  return m;
}

Manifest LoadManifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open manifest: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseManifest(buf.str(), path);
}

std::string UtteranceToJsonLine(const Utterance& u) {
  json j;
  j["id"] = u.id;
  j["audio_path"] = u.audio_path;
  j["sample_rate"] = u.sample_rate;
  j["duration_s"] = u.duration_s;
  j["size_bytes"] = u.size_bytes;
  j["language"] = u.language.code();
  j["emotion"] = std::string(EmotionName(u.emotion));
  j["dataset"] = u.dataset;
  j["split"] = std::string(SplitName(u.split));
  j["synthetic"] = u.synthetic;
  return j.dump();
}

std::string SerializeManifest(const Manifest& m) {
  std::string out;
  for (const auto& u : m.entries) {
    out += UtteranceToJsonLine(u);
    out += '\n';
  }
  return out;
}

void SaveManifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write manifest: " + path);
  out << SerializeManifest(m);
}

void FilterPolicy::Validate() const {
  if (!(min_duration_s >= 0.0)) {
    throw ValidationError("filter: min_duration_s must be >= 0");
  }
  std::set<std::string> seen;
  for (const auto& [name, group] : size_groups) {
    if (group.threshold_bytes < 0) {
      throw ValidationError("filter: negative threshold for group " + name);
    }
    for (const auto& d : group.datasets) {
      if (!seen.insert(Upper(d)).second) {
        throw ValidationError("filter: dataset " + d +
                              " belongs to more than one group");
      }
    }
  }
}

std::optional<std::string> FilterPolicy::GroupOf(std::string_view dataset) const {
  const std::string key = Upper(dataset);
  for (const auto& [name, group] : size_groups) {
    for (const auto& d : group.datasets) {
      if (Upper(d) == key) return name;
    }
  }
  return std::nullopt;
}

std::string FilterReport::ToJson() const {
  json j;
  j["input"] = input;
  j["kept"] = kept;
  j["rejected_duration"] = rejected_duration;
  j["rejected_size"] = rejected_size;
  return j.dump();
}

FilterResult ApplyFilterPolicy(const Manifest& m, const FilterPolicy& policy) {
  policy.Validate();
  FilterResult r;
  r.kept.provenance = m.provenance;
  r.rejected.provenance = m.provenance;
  r.report.input = static_cast<int64_t>(m.entries.size());
  for (const auto& u : m.entries) {
    if (u.duration_s < policy.min_duration_s) {
      r.rejected.entries.push_back(u);
      ++r.report.rejected_duration;
      continue;
    }
    const auto group = policy.GroupOf(u.dataset);
    if (!group) {
      if (policy.unknown_dataset == UnknownDatasetBehavior::kApplyGroup) {
        throw ValidationError("filter: dataset '" + u.dataset + "' (id " +
                              u.id + ") is not in any size group");
      }
      r.kept.entries.push_back(u);
      continue;
    }
    if (u.size_bytes < policy.size_groups.at(*group).threshold_bytes) {
      r.rejected.entries.push_back(u);
      ++r.report.rejected_size;
      continue;
    }
    r.kept.entries.push_back(u);
  }
  r.report.kept = static_cast<int64_t>(r.kept.entries.size());
  return r;
}

int64_t CorpusStats::Count(std::string_view language, Emotion emotion) const {
  int64_t n = 0;
  for (const auto& c : cells) {
    if (c.language == language && c.emotion == EmotionName(emotion)) n += c.count;
  }
  return n;
}

std::string CorpusStats::ToJson() const {
  json j;
  j["total_count"] = total_count;
  j["total_duration_s"] = total_duration_s;
  j["cells"] = json::array();
  for (const auto& c : cells) {
    j["cells"].push_back({{"language", c.language},
                          {"emotion", c.emotion},
                          {"dataset", c.dataset},
                          {"count", c.count},
                          {"duration_s", c.duration_s}});
  }
  j["by_language"] = by_language;
  json emo = json::object();
  for (int i = 0; i < kNumEmotions; ++i) {
    emo[std::string(kEmotionNames[i])] = by_emotion[i];
  }
  j["by_emotion"] = emo;
  return j.dump();
}

CorpusStats ComputeCorpusStats(const Manifest& m) {
  CorpusStats s;
  std::map<std::tuple<std::string, int, std::string>, StatsCell> cells;
  for (const auto& u : m.entries) {
    auto& c = cells[{u.language.code(), Code(u.emotion), u.dataset}];
    c.language = u.language.code();
    c.emotion = std::string(EmotionName(u.emotion));
    c.dataset = u.dataset;
    ++c.count;
    c.duration_s += u.duration_s;
    ++s.total_count;
    s.total_duration_s += u.duration_s;
    ++s.by_language[u.language.code()];
    ++s.by_emotion[Code(u.emotion)];
  }
  for (auto& [key, cell] : cells) s.cells.push_back(std::move(cell));
  return s;
}

Manifest AssignSplits(const Manifest& m, const SplitFractions& f,
                      uint64_t seed) {
  const double sum = f.train + f.dev + f.test;
  if (f.train < 0 || f.dev < 0 || f.test < 0 || std::abs(sum - 1.0) > 1e-9 ||
      f.train <= 0) {
    throw ValidationError(
        "split fractions must be nonnegative, train > 0, and sum to 1");
  }
  Manifest out = m;
  // Strata in order of first appearance.
  std::vector<std::pair<std::string, int>> order;
  std::map<std::pair<std::string, int>, std::vector<size_t>> strata;
  for (size_t i = 0; i < m.entries.size(); ++i) {
    const auto key = std::make_pair(m.entries[i].language.code(),
                                    Code(m.entries[i].emotion));
    auto [it, inserted] = strata.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(i);
  }
  for (const auto& key : order) {
    std::vector<size_t> idx = strata.at(key);
    Rng rng(CombineSeed(seed, HashString(key.first) * 31 + key.second));
    rng.Shuffle(idx);
    const int64_t n = static_cast<int64_t>(idx.size());
    int64_t n_dev = static_cast<int64_t>(std::floor(n * f.dev + 1e-9));
    int64_t n_test = static_cast<int64_t>(std::floor(n * f.test + 1e-9));
    if (n >= 3) {
      if (f.dev > 0 && n_dev == 0) n_dev = 1;
      if (f.test > 0 && n_test == 0) n_test = 1;
      while (n - n_dev - n_test < 1) {
        if (n_test >= n_dev) --n_test; else --n_dev;
      }
    }
    for (int64_t r = 0; r < n; ++r) {
      Split s = Split::kTrain;
      if (r < n_dev) s = Split::kDev;
      else if (r < n_dev + n_test) s = Split::kTest;
      out.entries[idx[r]].split = s;
    }
  }
  return out;
}

}  // namespace emoalign
