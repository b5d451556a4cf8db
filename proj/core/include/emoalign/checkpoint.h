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

#ifndef EMOALIGN_CHECKPOINT_H_
#define EMOALIGN_CHECKPOINT_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emoalign/trainer.h"

namespace emoalign {

// Layout (little-endian):
//   "EMAL" | u32 version | u64 header_bytes | JSON header
//   | float64 tensors in header order
// The header lists every tensor as {name, rows, cols}; names are prefixed
// encoder., qformer., decoder., adam.m.qformer., adam.v.qformer.
inline constexpr uint32_t kCheckpointVersion = 1;

std::vector<uint8_t> SerializeCheckpoint(const TrainingState& state);
TrainingState DeserializeCheckpoint(std::span<const uint8_t> bytes);

void SaveCheckpoint(const TrainingState& state, const std::string& path);
TrainingState LoadCheckpoint(const std::string& path);

// A fresh (stage 0) state built from a resolved run config.
TrainingState FreshState(const std::string& run_config_json,
                         const ModelConfig& model, uint64_t seed);

}  // namespace emoalign

#endif  // EMOALIGN_CHECKPOINT_H_
