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

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <toml.hpp>

namespace emoalign {

using nlohmann::json;

namespace {

// Walks one JSON object, recording which keys were read so leftovers can be
// reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(Where() + "expected a table");
  }

  bool Has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  void Read(const std::string& key, double& out) {
    if (!Has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ValidationError(Path(key) + ": expected a number");
    out = v.get<double>();
  }
  void Read(const std::string& key, int& out) {
    if (!Has(key)) return;
    const int64_t v = Integer(key);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      throw ValidationError(Path(key) + ": integer out of range");
    }
    out = static_cast<int>(v);
  }
  void Read(const std::string& key, int64_t& out) {
    if (Has(key)) out = Integer(key);
  }
  void Read(const std::string& key, uint64_t& out) {
    if (!Has(key)) return;
    const json& v = j_.at(key);
    if (v.is_number_unsigned()) {
      out = v.get<uint64_t>();
    } else {
      const int64_t i = Integer(key);
      if (i < 0) throw ValidationError(Path(key) + ": must be nonnegative");
      out = static_cast<uint64_t>(i);
    }
  }
  void Read(const std::string& key, bool& out) {
    if (!Has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ValidationError(Path(key) + ": expected a boolean");
    out = v.get<bool>();
  }
  void Read(const std::string& key, std::string& out) {
    if (!Has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ValidationError(Path(key) + ": expected a string");
    out = v.get<std::string>();
  }
  void Read(const std::string& key, std::vector<std::string>& out) {
    if (!Has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ValidationError(Path(key) + ": expected an array");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_string()) {
        throw ValidationError(Path(key) + ": expected an array of strings");
      }
      out.push_back(e.get<std::string>());
    }
  }
  void Read(const std::string& key, std::vector<uint64_t>& out) {
    if (!Has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ValidationError(Path(key) + ": expected an array");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_integer() || (e.is_number_integer() && !e.is_number_unsigned() &&
                                     e.get<int64_t>() < 0)) {
        throw ValidationError(Path(key) + ": expected nonnegative integers");
      }
      out.push_back(e.get<uint64_t>());
    }
  }

  // Nested table, or nullopt when absent.
  std::optional<Section> Child(const std::string& key) {
    if (!Has(key)) return std::nullopt;
    return Section(j_.at(key), Path(key));
  }

  const json& raw() const { return j_; }
  std::string Path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void Finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ValidationError("unknown config key '" + Path(key) + "'");
    }
  }

 private:
  std::string Where() const { return path_.empty() ? "" : path_ + ": "; }
  int64_t Integer(const std::string& key) const {
    const json& v = j_.at(key);
    if (!v.is_number_integer()) {
      throw ValidationError(Path(key) + ": expected an integer");
    }
    if (v.is_number_unsigned() &&
        v.get<uint64_t>() > static_cast<uint64_t>(std::numeric_limits<int64_t>::max())) {
      throw ValidationError(Path(key) + ": integer out of range");
    }
    return v.get<int64_t>();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string WindowName(WindowType w) {
  return w == WindowType::kHann ? "hann" : "rectangular";
}

WindowType ParseWindow(const std::string& s, const std::string& path) {
  if (s == "hann") return WindowType::kHann;
  if (s == "rectangular") return WindowType::kRectangular;
  throw ValidationError(path + ": unknown window '" + s + "'");
}

std::vector<std::string> LanguageCodes(const std::vector<LanguageTag>& tags) {
  std::vector<std::string> out;
  for (const auto& t : tags) out.push_back(t.code());
  return out;
}

json StageFilterJson(const StageFilter& f) {
  json j;
  j["synthetic"] = f.synthetic ? json(*f.synthetic) : json("any");
  j["languages"] = f.languages;
  return j;
}

void ReadStageFilter(Section s, StageFilter& f) {
  if (s.Has("synthetic")) {
    const json& v = s.raw().at("synthetic");
    if (v.is_boolean()) {
      f.synthetic = v.get<bool>();
    } else if (v.is_string() && v.get<std::string>() == "any") {
      f.synthetic.reset();
    } else {
      throw ValidationError(s.Path("synthetic") + ": expected true, false or \"any\"");
    }
  }
  s.Read("languages", f.languages);
  s.Finish();
}

json ModelJson(const ModelConfig& m) {
  json j;
  j["frontend"] = {{"n_fft", m.frontend.n_fft},
                   {"hop", m.frontend.hop},
                   {"window", WindowName(m.frontend.window)},
                   {"n_mels", m.frontend.n_mels},
                   {"sample_rate", m.frontend.sample_rate},
                   {"log_floor_eps", m.frontend.log_floor_eps}};
  j["encoder"] = {{"d_model", m.encoder.d_model},
                  {"n_layers", m.encoder.n_layers},
                  {"n_heads", m.encoder.n_heads},
                  {"ff_mult", m.encoder.ff_mult},
                  {"max_frames", m.encoder.max_frames},
                  {"positional_encoding", m.encoder.positional_encoding},
                  {"input_offset", m.encoder.input_offset},
                  {"input_scale", m.encoder.input_scale},
                  {"init_seed", m.encoder.init_seed}};
  j["qformer"] = {{"n_queries", m.qformer.n_queries},
                  {"d_model", m.qformer.d_model},
                  {"n_layers", m.qformer.n_layers},
                  {"n_heads", m.qformer.n_heads},
                  {"ff_mult", m.qformer.ff_mult},
                  {"init_seed", m.qformer_seed}};
  j["decoder"] = {{"d_model", m.decoder.d_model},
                  {"n_layers", m.decoder.n_layers},
                  {"n_heads", m.decoder.n_heads},
                  {"ff_mult", m.decoder.ff_mult},
                  {"max_length", m.decoder.max_length},
                  {"init_seed", m.decoder.init_seed},
                  {"prompt", m.decoder.prompt}};
  return j;
}

// Applies the model sections present in `root`.
void ReadModel(Section& root, ModelConfig& m) {
  if (auto s = root.Child("frontend")) {
    s->Read("n_fft", m.frontend.n_fft);
    s->Read("hop", m.frontend.hop);
    if (s->Has("window")) {
      std::string w;
      s->Read("window", w);
      m.frontend.window = ParseWindow(w, s->Path("window"));
    }
    s->Read("n_mels", m.frontend.n_mels);
    s->Read("sample_rate", m.frontend.sample_rate);
    s->Read("log_floor_eps", m.frontend.log_floor_eps);
    s->Finish();
  }
  if (auto s = root.Child("encoder")) {
    s->Read("d_model", m.encoder.d_model);
    s->Read("n_layers", m.encoder.n_layers);
    s->Read("n_heads", m.encoder.n_heads);
    s->Read("ff_mult", m.encoder.ff_mult);
    s->Read("max_frames", m.encoder.max_frames);
    s->Read("positional_encoding", m.encoder.positional_encoding);
    s->Read("input_offset", m.encoder.input_offset);
    s->Read("input_scale", m.encoder.input_scale);
    s->Read("init_seed", m.encoder.init_seed);
    s->Finish();
  }
  if (auto s = root.Child("qformer")) {
    s->Read("n_queries", m.qformer.n_queries);
    s->Read("d_model", m.qformer.d_model);
    s->Read("n_layers", m.qformer.n_layers);
    s->Read("n_heads", m.qformer.n_heads);
    s->Read("ff_mult", m.qformer.ff_mult);
    s->Read("init_seed", m.qformer_seed);
    s->Finish();
  }
  if (auto s = root.Child("decoder")) {
    s->Read("d_model", m.decoder.d_model);
    s->Read("n_layers", m.decoder.n_layers);
    s->Read("n_heads", m.decoder.n_heads);
    s->Read("ff_mult", m.decoder.ff_mult);
    s->Read("max_length", m.decoder.max_length);
    s->Read("init_seed", m.decoder.init_seed);
    s->Read("prompt", m.decoder.prompt);
    s->Finish();
  }
}

const char* kProsodyKeys[] = {"base_f0_hz", "f0_slope", "level_db",
                              "modulation_depth", "decay", "tempo"};

json ProsodyJson(const ProsodyParams& p) {
  return {{"base_f0_hz", p.base_f0_hz}, {"f0_slope", p.f0_slope},
          {"level_db", p.level_db},     {"modulation_depth", p.modulation_depth},
          {"decay", p.decay},           {"tempo", p.tempo}};
}

void ReadProsody(Section s, ProsodyParams& p) {
  double* fields[] = {&p.base_f0_hz, &p.f0_slope, &p.level_db,
                      &p.modulation_depth, &p.decay, &p.tempo};
  for (size_t i = 0; i < std::size(kProsodyKeys); ++i) s.Read(kProsodyKeys[i], *fields[i]);
  s.Finish();
}

json ToJsonObject(const RunConfig& c) {
  json j = ModelJson(c.model);
  j["preset"] = c.preset;
  const LossConfig& l = c.train.loss;
  j["loss"] = {{"w1", l.w1},
               {"w2", l.w2},
               {"margin", l.margin},
               {"lambda", l.lambda},
               {"reduction", l.reduction == PairReduction::kSum ? "sum" : "mean"}};
  const TrainConfig& t = c.train;
  j["train"] = {{"lr", t.lr},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},
                {"weight_decay", t.weight_decay},
                {"clip_norm", t.clip_norm},
                {"batch_size", t.batch_size},
                {"steps", t.steps},
                {"seed", t.seed},
                {"use_contrastive", t.use_contrastive},
                {"two_stage", t.two_stage},
                {"stage1", StageFilterJson(t.stage1)},
                {"stage2", StageFilterJson(t.stage2)},
                {"exclude_languages", t.exclude_languages},
                {"eval_every", t.eval_every}};
  j["eval"] = {{"classes", c.eval.classes},
               {"heldout_languages", c.eval.heldout_languages},
               {"ablation_seeds", c.eval.ablation_seeds}};
  const SynthesisProfile& p = c.synth.profile;
  const SynthRequest& r = c.synth.request;
  json prosody = json::object();
  for (Emotion e : kAllEmotions) {
    prosody[std::string(EmotionName(e))] = ProsodyJson(p.prosody[Code(e)]);
  }
  json timbre = json::object();
  for (const auto& [lang, tp] : p.timbre) {
    timbre[lang] = {{"resonance1_hz", tp.resonance1_hz},
                    {"resonance2_hz", tp.resonance2_hz},
                    {"tilt", tp.tilt}};
  }
  std::vector<std::string> emotions;
  for (Emotion e : r.emotions) emotions.emplace_back(EmotionName(e));
  j["synth"] = {{"seed", p.seed},
                {"f0_jitter", p.f0_jitter},
                {"level_jitter_db", p.level_jitter_db},
                {"resonance_jitter", p.resonance_jitter},
                {"noise_db", p.noise_db},
                {"prosody", prosody},
                {"timbre", timbre},
                {"languages", LanguageCodes(r.languages)},
                {"emotions", emotions},
                {"per_cell", r.per_cell},
                {"sample_rate", r.sample_rate},
                {"min_duration_s", r.min_duration_s},
                {"max_duration_s", r.max_duration_s},
                {"dataset_by_language", r.dataset_by_language},
                {"default_dataset", r.default_dataset},
                {"natural_languages", r.natural_languages},
                {"audio_dir", r.audio_dir},
                {"split_train", c.synth.splits.train},
                {"split_dev", c.synth.splits.dev},
                {"split_test", c.synth.splits.test}};
  json groups = json::object();
  for (const auto& [name, g] : c.filter.size_groups) {
    groups[name] = {{"threshold_bytes", g.threshold_bytes}, {"datasets", g.datasets}};
  }
  j["filter"] = {{"min_duration_s", c.filter.min_duration_s},
                 {"unknown_dataset", c.filter.unknown_dataset ==
                                             UnknownDatasetBehavior::kKeep
                                         ? "keep"
                                         : "apply-group"},
                 {"size_groups", groups}};
  return j;
}

RunConfig FromJsonObject(const json& doc) {
  Section root(doc, "");
  RunConfig c = RunConfig::Defaults();
  if (root.Has("preset")) {
    std::string preset;
    root.Read("preset", preset);
    if (preset == "paper") {
      c = RunConfig::PaperPreset();
    } else if (preset != "desk") {
      throw ValidationError("preset: unknown preset '" + preset +
                            "' (expected desk or paper)");
    }
  }
  ReadModel(root, c.model);
  if (auto s = root.Child("loss")) {
    LossConfig& l = c.train.loss;
    s->Read("w1", l.w1);
    s->Read("w2", l.w2);
    s->Read("margin", l.margin);
    s->Read("lambda", l.lambda);
    if (s->Has("reduction")) {
      std::string r;
      s->Read("reduction", r);
      if (r == "sum") {
        l.reduction = PairReduction::kSum;
      } else if (r == "mean") {
        l.reduction = PairReduction::kMean;
      } else {
        throw ValidationError(s->Path("reduction") + ": expected sum or mean");
      }
    }
    s->Finish();
  }
  if (auto s = root.Child("train")) {
    TrainConfig& t = c.train;
    s->Read("lr", t.lr);
    s->Read("beta1", t.beta1);
    s->Read("beta2", t.beta2);
    s->Read("adam_eps", t.adam_eps);
    s->Read("weight_decay", t.weight_decay);
    s->Read("clip_norm", t.clip_norm);
    s->Read("batch_size", t.batch_size);
    s->Read("steps", t.steps);
    s->Read("seed", t.seed);
    s->Read("use_contrastive", t.use_contrastive);
    s->Read("two_stage", t.two_stage);
    if (auto f = s->Child("stage1")) ReadStageFilter(*f, t.stage1);
    if (auto f = s->Child("stage2")) ReadStageFilter(*f, t.stage2);
    s->Read("exclude_languages", t.exclude_languages);
    s->Read("eval_every", t.eval_every);
    s->Read("threads", t.threads);
    s->Finish();
  }
  if (auto s = root.Child("eval")) {
    s->Read("classes", c.eval.classes);
    s->Read("heldout_languages", c.eval.heldout_languages);
    s->Read("ablation_seeds", c.eval.ablation_seeds);
    s->Finish();
  }
  if (auto s = root.Child("synth")) {
    SynthesisProfile& p = c.synth.profile;
    SynthRequest& r = c.synth.request;
    s->Read("seed", p.seed);
    s->Read("f0_jitter", p.f0_jitter);
    s->Read("level_jitter_db", p.level_jitter_db);
    s->Read("resonance_jitter", p.resonance_jitter);
    s->Read("noise_db", p.noise_db);
    if (auto pros = s->Child("prosody")) {
      for (Emotion e : kAllEmotions) {
        if (auto ps = pros->Child(std::string(EmotionName(e)))) {
          ReadProsody(*ps, p.prosody[Code(e)]);
        }
      }
      pros->Finish();
    }
    if (auto tim = s->Child("timbre")) {
      for (const auto& [lang, value] : tim->raw().items()) {
        Section ts = *tim->Child(lang);
        TimbreParams tp = p.TimbreFor(LanguageTag::Parse(lang));
        ts.Read("resonance1_hz", tp.resonance1_hz);
        ts.Read("resonance2_hz", tp.resonance2_hz);
        ts.Read("tilt", tp.tilt);
        ts.Finish();
        p.timbre[lang] = tp;
      }
    }
    if (s->Has("languages")) {
      std::vector<std::string> codes;
      s->Read("languages", codes);
      r.languages.clear();
      for (const auto& code : codes) r.languages.push_back(LanguageTag::Parse(code));
    }
    if (s->Has("emotions")) {
      std::vector<std::string> names;
      s->Read("emotions", names);
      r.emotions.clear();
      for (const auto& n : names) r.emotions.push_back(ParseEmotion(n));
    }
    s->Read("per_cell", r.per_cell);
    s->Read("sample_rate", r.sample_rate);
    s->Read("min_duration_s", r.min_duration_s);
    s->Read("max_duration_s", r.max_duration_s);
    if (auto d = s->Child("dataset_by_language")) {
      r.dataset_by_language.clear();
      for (const auto& [lang, value] : d->raw().items()) {
        std::string name;
        d->Read(lang, name);
        r.dataset_by_language[lang] = name;
      }
    }
    s->Read("default_dataset", r.default_dataset);
    s->Read("natural_languages", r.natural_languages);
    s->Read("audio_dir", r.audio_dir);
    s->Read("split_train", c.synth.splits.train);
    s->Read("split_dev", c.synth.splits.dev);
    s->Read("split_test", c.synth.splits.test);
    s->Finish();
  }
  if (auto s = root.Child("filter")) {
    s->Read("min_duration_s", c.filter.min_duration_s);
    if (s->Has("unknown_dataset")) {
      std::string b;
      s->Read("unknown_dataset", b);
      if (b == "keep") {
        c.filter.unknown_dataset = UnknownDatasetBehavior::kKeep;
      } else if (b == "apply-group") {
        c.filter.unknown_dataset = UnknownDatasetBehavior::kApplyGroup;
      } else {
        throw ValidationError(s->Path("unknown_dataset") +
                              ": expected keep or apply-group");
      }
    }
    if (auto g = s->Child("size_groups")) {
      c.filter.size_groups.clear();
      for (const auto& [name, value] : g->raw().items()) {
        Section gs = *g->Child(name);
        SizeGroup group;
        gs.Read("threshold_bytes", group.threshold_bytes);
        gs.Read("datasets", group.datasets);
        gs.Finish();
        c.filter.size_groups[name] = group;
      }
    }
    s->Finish();
  }
  root.Finish();
  c.Resolve();
  c.Validate();
  return c;
}

json TomlToJson(const toml::node& node, const std::string& path) {
  if (const auto* t = node.as_table()) {
    json j = json::object();
    for (const auto& [key, value] : *t) {
      const std::string k(key.str());
      j[k] = TomlToJson(value, path.empty() ? k : path + "." + k);
    }
    return j;
  }
  if (const auto* a = node.as_array()) {
    json j = json::array();
    for (const auto& value : *a) j.push_back(TomlToJson(value, path));
    return j;
  }
  if (const auto* v = node.as_string()) return v->get();
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  throw ValidationError(path + ": dates and times are not supported");
}

}  // namespace

RunConfig RunConfig::Defaults() {
  RunConfig c;
  c.synth.request.languages.clear();
  for (auto code : kBuiltinLanguages) {
    c.synth.request.languages.push_back(LanguageTag::Parse(code));
  }
  c.synth.request.emotions.assign(kAllEmotions.begin(), kAllEmotions.end());
  c.synth.request.per_cell = 60;
  c.synth.request.natural_languages = {"en"};
  c.synth.request.dataset_by_language = {{"en", "desk-en"}, {"es", "heldout-es"}};
  c.train.exclude_languages = {"es"};
  c.eval.heldout_languages = {"es"};
  c.Resolve();
  return c;
}

RunConfig RunConfig::PaperPreset() {
  RunConfig c = Defaults();
  c.preset = "paper";
  c.train.lr = 1e-5;
  c.train.weight_decay = 1e-6;
  c.model.qformer.d_model = 256;
  c.model.qformer.n_queries = 32;
  c.Resolve();
  return c;
}

RunConfig RunConfig::FromJson(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config JSON: ") + e.what());
  }
  return FromJsonObject(doc);
}

RunConfig RunConfig::FromToml(const std::string& text) {
  toml::table table;
  try {
    table = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config TOML line " << e.source().begin.line << ", column "
        << e.source().begin.column << ": " << e.description();
    throw ValidationError(msg.str());
  }
  return FromJsonObject(TomlToJson(table, ""));
}

RunConfig RunConfig::LoadToml(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return FromToml(ss.str());
}

std::string RunConfig::ToJson() const { return ToJsonObject(*this).dump(); }

void RunConfig::Resolve() { model.Resolve(); }

void RunConfig::Validate() const {
  model.Validate();
  train.Validate();
  if (train.lr <= 0) throw ValidationError("train.lr: must be > 0");
  if (eval.classes != 4 && eval.classes != 7) {
    throw ValidationError("eval.classes: must be 4 or 7");
  }
  if (eval.ablation_seeds.empty()) {
    throw ValidationError("eval.ablation_seeds: must not be empty");
  }
  for (const auto& code : eval.heldout_languages) LanguageTag::Parse(code);
  for (const auto& code : train.exclude_languages) LanguageTag::Parse(code);
  synth.profile.Validate();
  const SynthRequest& r = synth.request;
  if (r.per_cell < 0 || r.sample_rate <= 0 || !(r.min_duration_s > 0) ||
      r.max_duration_s < r.min_duration_s) {
    throw ValidationError("synth: per_cell, sample_rate or duration range invalid");
  }
  const SplitFractions& f = synth.splits;
  if (f.train <= 0 || f.dev < 0 || f.test < 0 ||
      std::abs(f.train + f.dev + f.test - 1.0) > 1e-9) {
    throw ValidationError("synth: split fractions must be >= 0, train > 0, and sum to 1");
  }
  filter.Validate();
}

std::string ModelConfigToJson(const ModelConfig& model) {
  return ModelJson(model).dump();
}

ModelConfig ModelConfigFromJson(const std::string& json_text) {
  const json doc = json::parse(json_text);
  Section root(doc, "");
  ModelConfig m;
  ReadModel(root, m);
  root.Finish();
  m.Resolve();
  m.Validate();
  return m;
}

}  // namespace emoalign
