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

// emoalign: corpus synthesis, filtering, training, evaluation and analysis.
//
// Exit codes: 0 success, 1 validation failure (bad flags, config or data),
// 2 numeric-check failure (non-finite loss, failed gradient check).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emoalign/checkpoint.h"
#include "emoalign/config.h"
#include "emoalign/corpus.h"
#include "emoalign/eval.h"
#include "emoalign/synth.h"
#include "emoalign/trainer.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace emoalign {
namespace {

struct Options {
  std::string config_path;
  std::string manifest_path;
  std::string ckpt_path;
  std::string out_dir;
  std::optional<uint64_t> seed;
  std::optional<int> stage;
  int threads = 1;
  std::optional<int> classes;
  std::string what;
};

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
  if (!out) throw ValidationError("failed writing " + path.string());
}

RunConfig LoadConfig(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig::Defaults()
                                      : RunConfig::LoadToml(o.config_path);
  c.train.threads = o.threads;
  if (o.seed) {
    c.train.seed = *o.seed;
    c.synth.profile.seed = *o.seed;
  }
  if (o.classes) c.eval.classes = *o.classes;
  c.Resolve();
  c.Validate();
  return c;
}

std::string Require(const std::string& value, const char* flag, const char* command) {
  if (value.empty()) {
    throw ValidationError(std::string(command) + ": " + flag + " is required");
  }
  return value;
}

// Metadata written next to manifests, whose rows have a fixed schema.
void WriteManifestWithMeta(const Manifest& m, const fs::path& path,
                           const std::string& config_json, uint64_t seed) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  SaveManifest(m, path.string());
  json meta = {{"config", json::parse(config_json)},
               {"seed", seed},
               {"provenance", m.provenance},
               {"entries", m.entries.size()}};
  fs::path meta_path = path;
  meta_path.replace_extension(".meta.json");
  WriteText(meta_path, meta.dump() + "\n");
}

WaveLoader LoaderFor(const std::string& manifest_path) {
  return FileWaveLoader(fs::absolute(manifest_path).parent_path().string());
}

int RunSynth(const Options& o) {
  const RunConfig c = LoadConfig(o);
  const fs::path out = Require(o.out_dir, "--out", "synth");
  SynthCorpus corpus = SynthGenerate(c.synth.profile, c.synth.request, o.threads);
  corpus.manifest = AssignSplits(corpus.manifest, c.synth.splits, c.synth.profile.seed);
  WriteSynthCorpus(corpus, out.string());
  WriteManifestWithMeta(corpus.manifest, out / "manifest.jsonl", c.ToJson(),
                        c.synth.profile.seed);
  std::cout << "synth: wrote " << corpus.manifest.entries.size() << " utterances to "
            << out.string() << "\n";
  return 0;
}

int RunFilter(const Options& o) {
  const RunConfig c = LoadConfig(o);
  const Manifest m = LoadManifest(Require(o.manifest_path, "--manifest", "filter"));
  const fs::path out = Require(o.out_dir, "--out", "filter");
  const FilterResult r = ApplyFilterPolicy(m, c.filter);
  const std::string config_json = c.ToJson();
  WriteManifestWithMeta(r.kept, out / "kept.jsonl", config_json, c.train.seed);
  WriteManifestWithMeta(r.rejected, out / "rejected.jsonl", config_json, c.train.seed);
  json report = json::parse(r.report.ToJson());
  report["config"] = json::parse(config_json);
  WriteText(out / "filter_report.json", report.dump() + "\n");
  std::cout << "filter: kept " << r.kept.entries.size() << ", rejected "
            << r.rejected.entries.size() << "\n";
  return 0;
}

int RunStats(const Options& o) {
  const RunConfig c = LoadConfig(o);
  const Manifest m = LoadManifest(Require(o.manifest_path, "--manifest", "stats"));
  json stats = json::parse(ComputeCorpusStats(m).ToJson());
  stats["config"] = json::parse(c.ToJson());
  const std::string text = stats.dump() + "\n";
  if (o.out_dir.empty()) {
    std::cout << text;
  } else {
    WriteText(fs::path(o.out_dir) / "stats.json", text);
  }
  return 0;
}

int RunTrain(const Options& o) {
  const RunConfig c = LoadConfig(o);
  if (!o.stage) throw ValidationError("train: --stage 1|2 is required");
  const int stage = *o.stage;
  const std::string manifest_path = Require(o.manifest_path, "--manifest", "train");
  const fs::path out = Require(o.out_dir, "--out", "train");
  const Manifest m = LoadManifest(manifest_path);
  const std::string config_json = c.ToJson();

  TrainingState init = o.ckpt_path.empty()
                           ? FreshState(config_json, c.model, c.train.seed)
                           : LoadCheckpoint(o.ckpt_path);
  if (!o.ckpt_path.empty()) {
    if (ModelConfigToJson(init.models.config) != ModelConfigToJson(c.model)) {
      throw ValidationError("train: checkpoint model does not match the config");
    }
    init.config_json = config_json;
  }
  const FeatureBank bank = BuildFeatureBank(init.models, m, LoaderFor(manifest_path),
                                            o.threads);

  EvalHook hook;
  const std::vector<size_t> heldout = HeldOutRows(m, c.eval);
  Manifest heldout_manifest;
  FeatureBank heldout_bank;
  if (c.train.eval_every > 0 && !heldout.empty()) {
    for (size_t r : heldout) {
      heldout_manifest.entries.push_back(m.entries[r]);
      heldout_bank.features.push_back(bank.features[r]);
      heldout_bank.labels.push_back(bank.labels[r]);
    }
    const std::vector<Emotion> restrict = ClassSet(c.eval.classes);
    hook = [&, restrict](const Models& models) {
      const EvaluationResult r =
          Evaluate(models, heldout_manifest, heldout_bank, restrict, {}, o.threads);
      return EvalPoint{0, r.pooled.wa, r.pooled.ua};
    };
  }
  const StageResult result = TrainStage(stage, m, bank, c.train, std::move(init), hook);

  const std::string tag = "stage" + std::to_string(stage);
  SaveCheckpoint(result.state, (out / (tag + ".ckpt")).string());
  WriteText(out / (tag + "_log.jsonl"), StepLogToJsonl(result.log));
  std::string evals;
  for (const auto& p : result.evals) {
    evals += json{{"step", p.step}, {"wa", p.wa}, {"ua", p.ua}}.dump() + "\n";
  }
  WriteText(out / (tag + "_eval.jsonl"), evals);
  WriteText(out / (tag + "_log.meta.json"),
            json{{"config", json::parse(config_json)},
                 {"seed", c.train.seed},
                 {"stage", stage},
                 {"steps", result.log.size()}}
                    .dump() +
                "\n");
  if (!result.log.empty()) {
    const StepLog& last = result.log.back();
    std::cout << "train: stage " << stage << " step " << last.step << " lec " << last.lec
              << " ce " << last.ce << " total " << last.total << "\n";
  } else {
    std::cout << "train: stage " << stage << " ran 0 steps\n";
  }
  return 0;
}

int RunEval(const Options& o) {
  const std::string ckpt = Require(o.ckpt_path, "--ckpt", "eval");
  const std::string manifest_path = Require(o.manifest_path, "--manifest", "eval");
  const fs::path out = Require(o.out_dir, "--out", "eval");
  const TrainingState state = LoadCheckpoint(ckpt);
  int classes = 7;
  if (!state.config_json.empty()) {
    classes = RunConfig::FromJson(state.config_json).eval.classes;
  }
  if (o.classes) classes = *o.classes;
  const Manifest m = LoadManifest(manifest_path);
  const EvaluationResult r =
      Evaluate(state, m, LoaderFor(manifest_path), ClassSet(classes), o.threads);
  WriteText(out / "report.json", r.ToJson(state.config_json, state.seed) + "\n");
  WriteText(out / "predictions.jsonl", r.PredictionsJsonl());
  std::cout << "eval: n " << r.pooled.n << " WA " << r.pooled.wa << " UA " << r.pooled.ua
            << " WF1 " << r.pooled.wf1 << " skipped " << r.skipped << "\n";
  return 0;
}

int RunAblate(const Options& o) {
  const RunConfig c = LoadConfig(o);
  const std::string manifest_path = Require(o.manifest_path, "--manifest", "ablate");
  const fs::path out = Require(o.out_dir, "--out", "ablate");
  const Manifest m = LoadManifest(manifest_path);
  const Models models(c.model);
  const FeatureBank bank = BuildFeatureBank(models, m, LoaderFor(manifest_path), o.threads);
  const AblationResult r = RunAblation(c, m, bank);
  WriteText(out / "ablation.json", r.ToJson(c.ToJson()) + "\n");
  for (int cell = 0; cell < kNumAblationCells; ++cell) {
    const auto id = static_cast<AblationCell>(cell);
    std::cout << AblationCellName(id) << " mean WA " << r.MeanWa(id) << "\n";
  }
  return 0;
}

int RunAnalyze(const Options& o) {
  const std::string manifest_path = Require(o.manifest_path, "--manifest", "analyze");
  const fs::path out = Require(o.out_dir, "--out", "analyze");
  const Manifest m = LoadManifest(manifest_path);
  const WaveLoader loader = LoaderFor(manifest_path);

  if (o.what == "mean-spec") {
    const RunConfig c = LoadConfig(o);
    const std::vector<Vector> specs =
        MeanSpectrograms(c.model.frontend, m, loader, o.threads);
    const SpectralConsistency euclid =
        AnalyzeMeanSpectrograms(m, specs, SpectralDistance::kEuclidean);
    const SpectralConsistency cosine =
        AnalyzeMeanSpectrograms(m, specs, SpectralDistance::kCosine);
    Matrix rows(static_cast<Eigen::Index>(specs.size()), specs.front().size());
    for (size_t i = 0; i < specs.size(); ++i) {
      rows.row(static_cast<Eigen::Index>(i)) = specs[i].transpose();
    }
    WriteText(out / "mean_spec.csv", VectorsCsv(m, rows, "m"));
    WriteText(out / "mean_spec_cells.csv", euclid.CellsCsv());
    json j = {{"config", json::parse(c.ToJson())},
              {"euclidean", json::parse(euclid.ToJson(""))},
              {"cosine", json::parse(cosine.ToJson(""))}};
    j["euclidean"].erase("config");
    j["cosine"].erase("config");
    WriteText(out / "mean_spec.json", j.dump() + "\n");
    std::cout << "analyze: mean-spec consistent (euclidean) "
              << (euclid.consistent ? "yes" : "no") << ", (cosine) "
              << (cosine.consistent ? "yes" : "no") << "\n";
    return 0;
  }
  if (o.what != "embeddings" && o.what != "projection" && o.what != "silhouette") {
    throw ValidationError("analyze: --what must be mean-spec, embeddings, projection or "
                          "silhouette");
  }
  // Embedding analyses use a checkpoint, or the untrained connector.
  std::optional<TrainingState> state;
  if (!o.ckpt_path.empty()) {
    state.emplace(LoadCheckpoint(o.ckpt_path));
  } else {
    const RunConfig c = LoadConfig(o);
    state.emplace(FreshState(c.ToJson(), c.model, c.train.seed));
  }
  const FeatureBank bank = BuildFeatureBank(state->models, m, loader, o.threads);
  const Matrix emb = PooledEmbeddings(state->models, bank, o.threads);
  const json config = state->config_json.empty() ? json(nullptr)
                                                 : json::parse(state->config_json);
  if (o.what == "embeddings") {
    WriteText(out / "embeddings.csv", VectorsCsv(m, emb, "e"));
  } else if (o.what == "projection") {
    const Projection p = Project2D(emb);
    WriteText(out / "projection.csv", ProjectionCsv(m, p));
    WriteText(out / "projection.json",
              json{{"config", config},
                   {"seed", state->seed},
                   {"explained", {p.explained[0], p.explained[1]}}}
                      .dump() +
                  "\n");
  } else {
    json by_language = json::object();
    std::map<std::string, std::vector<size_t>> rows;
    for (size_t i = 0; i < m.entries.size(); ++i) {
      rows[m.entries[i].language.code()].push_back(i);
    }
    for (const auto& [lang, idx] : rows) {
      Matrix sub(static_cast<Eigen::Index>(idx.size()), emb.cols());
      std::vector<int> labels;
      for (size_t k = 0; k < idx.size(); ++k) {
        sub.row(static_cast<Eigen::Index>(k)) = emb.row(static_cast<Eigen::Index>(idx[k]));
        labels.push_back(bank.labels[idx[k]]);
      }
      try {
        by_language[lang] = SilhouetteScore(sub, labels);
      } catch (const ValidationError&) {
        by_language[lang] = nullptr;  // too few labels in this language
      }
    }
    const double overall = SilhouetteScore(emb, bank.labels);
    WriteText(out / "silhouette.json", json{{"config", config},
                                            {"seed", state->seed},
                                            {"silhouette", overall},
                                            {"by_language", by_language}}
                                               .dump() +
                                           "\n");
    std::cout << "analyze: silhouette " << overall << "\n";
  }
  return 0;
}

int RunGradcheck(const Options& o) {
  const GradCheckSuiteResult r = RunGradCheckSuite(1e-5, 1e-6, o.seed.value_or(5));
  for (const auto& rep : r.reports) {
    std::cout << (rep.passed ? "PASS " : "FAIL ") << rep.label << " max_rel_error "
              << rep.max_rel_error << " active_hinges " << rep.active_hinges << "/"
              << rep.negative_pairs << "\n";
  }
  std::cout << "gradcheck: " << (r.passed ? "passed" : "FAILED") << " in " << r.seconds
            << " s\n";
  if (!o.out_dir.empty()) WriteText(fs::path(o.out_dir) / "gradcheck.json", r.ToJson() + "\n");
  return r.passed ? 0 : 2;
}

int Main(int argc, char** argv) {
  CLI::App app{"emoalign: contrastive multilingual speech emotion alignment"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config_path, "TOML run configuration")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Seed override");
    cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  auto add = [&](const char* name, const char* help) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd);
    return cmd;
  };

  CLI::App* synth = add("synth", "Generate the procedural corpus and manifest");
  synth->add_option("--out", o.out_dir, "Output directory")->required();

  CLI::App* filter = add("filter", "Apply duration and size filtering");
  filter->add_option("--manifest", o.manifest_path, "Input manifest")->required();
  filter->add_option("--out", o.out_dir, "Output directory")->required();

  CLI::App* stats = add("stats", "Corpus statistics as JSON");
  stats->add_option("--manifest", o.manifest_path, "Input manifest")->required();
  stats->add_option("--out", o.out_dir, "Output directory (default: stdout)");

  CLI::App* train = add("train", "Train one stage of the connector");
  train->add_option("--stage", o.stage, "Stage")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--manifest", o.manifest_path, "Training manifest")->required();
  train->add_option("--ckpt", o.ckpt_path, "Initial checkpoint");
  train->add_option("--out", o.out_dir, "Output directory")->required();

  CLI::App* eval = add("eval", "Evaluate a checkpoint");
  eval->add_option("--ckpt", o.ckpt_path, "Checkpoint")->required();
  eval->add_option("--manifest", o.manifest_path, "Evaluation manifest")->required();
  eval->add_option("--out", o.out_dir, "Output directory")->required();
  eval->add_option("--classes", o.classes, "Class set")->check(CLI::IsMember({4, 7}));

  CLI::App* ablate = add("ablate", "Run the six-cell ablation grid");
  ablate->add_option("--manifest", o.manifest_path, "Corpus manifest")->required();
  ablate->add_option("--out", o.out_dir, "Output directory")->required();
  ablate->add_option("--classes", o.classes, "Class set")->check(CLI::IsMember({4, 7}));

  CLI::App* analyze = add("analyze", "Export analysis CSV/JSON");
  analyze->add_option("--what", o.what, "mean-spec|embeddings|projection|silhouette")
      ->required()
      ->check(CLI::IsMember({"mean-spec", "embeddings", "projection", "silhouette"}));
  analyze->add_option("--manifest", o.manifest_path, "Corpus manifest")->required();
  analyze->add_option("--ckpt", o.ckpt_path, "Checkpoint (default: untrained)");
  analyze->add_option("--out", o.out_dir, "Output directory")->required();

  CLI::App* gradcheck = add("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--out", o.out_dir, "Write gradcheck.json here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    CLI::App* failing = &app;
    for (CLI::App* sub : app.get_subcommands()) failing = sub;
    std::cerr << failing->help();
    return 1;
  }

  try {
    if (*synth) return RunSynth(o);
    if (*filter) return RunFilter(o);
    if (*stats) return RunStats(o);
    if (*train) return RunTrain(o);
    if (*eval) return RunEval(o);
    if (*ablate) return RunAblate(o);
    if (*analyze) return RunAnalyze(o);
    if (*gradcheck) return RunGradcheck(o);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace
}  // namespace emoalign

int main(int argc, char** argv) { return emoalign::Main(argc, argv); }
