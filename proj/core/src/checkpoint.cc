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

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "emoalign/config.h"

namespace emoalign {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'E', 'M', 'A', 'L'};

std::string Hex(uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

// Calls f(name, tensor) over every stored tensor in file order.
template <typename State, typename F>
void VisitState(State& models_and_adam, F&& f) {
  auto& [encoder, qformer, decoder, adam_m, adam_v] = models_and_adam;
  VisitTensors(encoder, "encoder", f);
  VisitTensors(qformer, "qformer", f);
  VisitTensors(decoder, "decoder", f);
  VisitTensors(adam_m, "adam.m.qformer", f);
  VisitTensors(adam_v, "adam.v.qformer", f);
}

struct TensorRefs {
  EncoderParams encoder;
  QFormerParams qformer;
  DecoderParams decoder;
  QFormerParams adam_m;
  QFormerParams adam_v;
};

TensorRefs Snapshot(const TrainingState& s) {
  return TensorRefs{s.models.encoder.params(), s.models.qformer.params,
                    s.models.decoder.params(), s.adam.m, s.adam.v};
}

template <typename T>
void Append(std::vector<uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T ReadAt(std::span<const uint8_t> bytes, size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) {
    throw ValidationError("checkpoint: truncated file");
  }
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

std::vector<uint8_t> SerializeCheckpoint(const TrainingState& state) {
  TensorRefs refs = Snapshot(state);
  json header;
  header["version"] = kCheckpointVersion;
  header["config"] = state.config_json.empty() ? json(nullptr)
                                               : json::parse(state.config_json);
  header["model"] = json::parse(ModelConfigToJson(state.models.config));
  header["stage"] = state.stage;
  header["step"] = state.step;
  header["seed"] = state.seed;
  header["adam_t"] = state.adam.t;
  header["seen_datasets"] = state.seen_datasets;
  header["seen_languages"] = state.seen_languages;
  header["checksums"] = {{"encoder", Hex(state.models.encoder.ComputeChecksum())},
                         {"decoder", Hex(state.models.decoder.ComputeChecksum())},
                         {"qformer", Hex(ParamChecksum(state.models.qformer.params))}};
  json tensors = json::array();
  size_t count = 0;
  VisitState(refs, [&](const std::string& name, const Matrix& t) {
    tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    count += static_cast<size_t>(t.size());
  });
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::vector<uint8_t> out;
  out.reserve(16 + text.size() + count * sizeof(double));
  out.insert(out.end(), kMagic, kMagic + 4);
  Append<uint32_t>(out, kCheckpointVersion);
  Append<uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  VisitState(refs, [&](const std::string&, const Matrix& t) {
    const auto* p = reinterpret_cast<const uint8_t*>(t.data());
    out.insert(out.end(), p, p + t.size() * sizeof(double));
  });
  return out;
}

TrainingState DeserializeCheckpoint(std::span<const uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ValidationError("checkpoint: bad magic (not an EMAL file)");
  }
  size_t pos = 4;
  const auto version = ReadAt<uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto header_len = ReadAt<uint64_t>(bytes, pos);
  if (bytes.size() - pos < header_len) throw ValidationError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: bad header: ") + e.what());
  }
  pos += header_len;

  try {
    TrainingState state(ModelConfigFromJson(header.at("model").dump()));
    state.config_json = header.at("config").is_null() ? "" : header.at("config").dump();
    state.stage = header.at("stage").get<int>();
    state.step = header.at("step").get<int64_t>();
    state.seed = header.at("seed").get<uint64_t>();
    state.adam.t = header.at("adam_t").get<int64_t>();
    state.seen_datasets = header.at("seen_datasets").get<std::vector<std::string>>();
    state.seen_languages = header.at("seen_languages").get<std::vector<std::string>>();

    TensorRefs refs = Snapshot(state);
    const json& entries = header.at("tensors");
    size_t index = 0;
    VisitState(refs, [&](const std::string& name, Matrix& t) {
      if (index >= entries.size()) throw ValidationError("checkpoint: missing tensor " + name);
      const json& e = entries[index++];
      if (e.at("name").get<std::string>() != name ||
          e.at("rows").get<int64_t>() != t.rows() || e.at("cols").get<int64_t>() != t.cols()) {
        throw ValidationError("checkpoint: tensor " + name + " does not match the model");
      }
      const size_t n = static_cast<size_t>(t.size()) * sizeof(double);
      if (bytes.size() - pos < n) throw ValidationError("checkpoint: truncated tensor " + name);
      std::memcpy(t.data(), bytes.data() + pos, n);
      pos += n;
    });
    if (index != entries.size() || pos != bytes.size()) {
      throw ValidationError("checkpoint: unexpected trailing tensors or bytes");
    }
    state.models.encoder.RestoreParams(std::move(refs.encoder));
    state.models.decoder.RestoreParams(std::move(refs.decoder));
    state.models.qformer.params = std::move(refs.qformer);
    state.adam.m = std::move(refs.adam_m);
    state.adam.v = std::move(refs.adam_v);

    const json& sums = header.at("checksums");
    if (sums.at("encoder") != Hex(state.models.encoder.ComputeChecksum()) ||
        sums.at("decoder") != Hex(state.models.decoder.ComputeChecksum()) ||
        sums.at("qformer") != Hex(ParamChecksum(state.models.qformer.params))) {
      throw ValidationError("checkpoint: checksum mismatch");
    }
    return state;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: bad header: ") + e.what());
  }
}

void SaveCheckpoint(const TrainingState& state, const std::string& path) {
  const std::vector<uint8_t> bytes = SerializeCheckpoint(state);
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("failed writing checkpoint " + path);
}

TrainingState LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return DeserializeCheckpoint(bytes);
}

TrainingState FreshState(const std::string& run_config_json, const ModelConfig& model,
                         uint64_t seed) {
  TrainingState state(model);
  state.config_json = run_config_json;
  state.seed = seed;
  return state;
}

}  // namespace emoalign
