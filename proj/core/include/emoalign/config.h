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

#ifndef EMOALIGN_CONFIG_H_
#define EMOALIGN_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "emoalign/corpus.h"
#include "emoalign/losses.h"
#include "emoalign/pipeline.h"
#include "emoalign/synth.h"
#include "emoalign/trainer.h"

namespace emoalign {

struct EvalConfig {
  int classes = 7;
  std::vector<std::string> heldout_languages;
  std::vector<uint64_t> ablation_seeds = {1, 2, 3};
};

struct SynthConfig {
  SynthesisProfile profile = SynthesisProfile::Default();
  SynthRequest request;
  SplitFractions splits;
};

// Fully resolved run configuration. Parsed from TOML with sections
// [frontend] [encoder] [qformer] [decoder] [loss] [train] [eval] [synth]
// [filter]; every key is optional and unknown keys are rejected.
struct RunConfig {
  std::string preset = "desk";
  ModelConfig model;
  TrainConfig train;  // [loss] populates train.loss
  EvalConfig eval;
  SynthConfig synth;
  FilterPolicy filter;

  static RunConfig Defaults();
  // Desk defaults with the reported optimizer settings and connector width.
  static RunConfig PaperPreset();

  static RunConfig FromToml(const std::string& text);
  static RunConfig LoadToml(const std::string& path);
  static RunConfig FromJson(const std::string& json_text);
  // Canonical JSON echo (sorted keys, no whitespace).
  std::string ToJson() const;

  void Resolve();
  void Validate() const;
};

// Model section round-trip used by checkpoint headers.
std::string ModelConfigToJson(const ModelConfig& model);
ModelConfig ModelConfigFromJson(const std::string& json_text);

}  // namespace emoalign

#endif  // EMOALIGN_CONFIG_H_
