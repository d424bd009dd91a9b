// Copyright 2026 The ldmric Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ldmric/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "ldmric/errors.h"

namespace ldmric {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "ldmric-checkpoint";
constexpr int kVersion = 1;

std::string ModuleOf(const std::string& name) {
  return name.substr(0, name.find('.'));
}

void WriteFloats(const fs::path& path, const Tensor& t) {
  std::vector<uint8_t> bytes(static_cast<size_t>(t.size()) * 4);
  for (int64_t i = 0; i < t.size(); ++i) {
    const uint32_t u = std::bit_cast<uint32_t>(static_cast<float>(t[i]));
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<uint8_t>(u >> (8 * b));
  }
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

Tensor ReadFloats(const fs::path& path, const Shape& shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint file missing: " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  const int64_t n = NumElements(shape);
  if (static_cast<int64_t>(bytes.size()) != 4 * n) {
    throw ConfigError(path.string() + " holds " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(4 * n) + " for " +
                      ShapeToString(shape));
  }
  Tensor t(shape);
  for (int64_t i = 0; i < n; ++i) {
    uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<uint32_t>(bytes[i * 4 + b]) << (8 * b);
    t[i] = static_cast<double>(std::bit_cast<float>(u));
  }
  return t;
}

std::string FileStem(const std::string& name) {
  // Parameter names are dotted identifiers; keep them as file names.
  for (char c : name) {
    if (c == '/' || c == '\\') throw ConfigError("invalid parameter name " + name);
  }
  return name;
}

}  // namespace

Checkpoint Checkpoint::Capture(const CheckpointMeta& meta,
                               const ParameterSet& params,
                               const Adam* optimizer) {
  Checkpoint ckpt;
  ckpt.meta = meta;
  for (const auto& [name, v] : params.entries()) {
    ckpt.params.push_back({name, ModuleOf(name), v.value()});
  }
  if (optimizer) ckpt.optimizer = optimizer->state();
  return ckpt;
}

void Checkpoint::Save(const fs::path& dir) const {
  fs::create_directories(dir / "params");
  json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kVersion;
  manifest["stage"] = meta.stage;
  manifest["codec_tag"] = meta.codec_tag;
  manifest["config_hash"] = meta.config_hash;
  manifest["iteration"] = meta.iteration;
  manifest["config"] =
      meta.config_json.empty() ? json::object() : json::parse(meta.config_json);
  if (meta.eta.empty()) {
    manifest["schedule"] = nullptr;
  } else {
    manifest["schedule"] = {{"T", meta.eta.size()}, {"eta", meta.eta}};
  }
  json table = json::array();
  for (const NamedTensor& p : params) {
    const std::string file = "params/" + FileStem(p.name) + ".bin";
    table.push_back({{"name", p.name},
                     {"module", p.module},
                     {"shape", p.value.shape()},
                     {"dtype", "float32le"},
                     {"file", file}});
    WriteFloats(dir / file, p.value);
  }
  manifest["params"] = table;
  if (optimizer) {
    fs::create_directories(dir / "optimizer");
    json moments = json::array();
    for (const AdamMoments& mo : optimizer->moments) {
      const std::string stem = "optimizer/" + FileStem(mo.name);
      WriteFloats(dir / (stem + ".m.bin"), mo.m);
      WriteFloats(dir / (stem + ".v.bin"), mo.v);
      moments.push_back({{"name", mo.name}, {"shape", mo.m.shape()},
                         {"m", stem + ".m.bin"}, {"v", stem + ".v.bin"}});
    }
    manifest["optimizer"] = {{"step", optimizer->step}, {"moments", moments}};
  } else {
    manifest["optimizer"] = nullptr;
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << "\n";
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
}

Checkpoint Checkpoint::Load(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("no checkpoint manifest at " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ConfigError(manifest_path.string() + ": " + e.what());
  }
  Checkpoint ckpt;
  try {
    if (manifest.at("format") != kFormat || manifest.at("version") != kVersion) {
      throw ConfigError(manifest_path.string() + " is not a version " +
                        std::to_string(kVersion) + " checkpoint");
    }
    ckpt.meta.stage = manifest.at("stage").get<int>();
    ckpt.meta.codec_tag = manifest.at("codec_tag").get<std::string>();
    ckpt.meta.config_hash = manifest.at("config_hash").get<std::string>();
    ckpt.meta.iteration = manifest.at("iteration").get<int64_t>();
    ckpt.meta.config_json = manifest.at("config").dump();
    if (!manifest.at("schedule").is_null()) {
      ckpt.meta.eta = manifest["schedule"].at("eta").get<std::vector<double>>();
    }
    for (const json& entry : manifest.at("params")) {
      const std::string name = entry.at("name").get<std::string>();
      const Shape shape = entry.at("shape").get<Shape>();
      ckpt.params.push_back({name, entry.at("module").get<std::string>(),
                             ReadFloats(dir / entry.at("file").get<std::string>(),
                                        shape)});
    }
    if (!manifest.at("optimizer").is_null()) {
      AdamState state;
      state.step = manifest["optimizer"].at("step").get<int64_t>();
      for (const json& entry : manifest["optimizer"].at("moments")) {
        const Shape shape = entry.at("shape").get<Shape>();
        state.moments.push_back(
            {entry.at("name").get<std::string>(),
             ReadFloats(dir / entry.at("m").get<std::string>(), shape),
             ReadFloats(dir / entry.at("v").get<std::string>(), shape)});
      }
      ckpt.optimizer = std::move(state);
    }
  } catch (const json::exception& e) {
    throw ConfigError(manifest_path.string() + ": malformed manifest: " + e.what());
  }
  // Canonical form of the embedded config, as written by Save.
  if (ckpt.meta.config_json == "{}") ckpt.meta.config_json.clear();
  return ckpt;
}

bool Checkpoint::Contains(const std::string& name) const {
  for (const NamedTensor& p : params) {
    if (p.name == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::Get(const std::string& name) const {
  for (const NamedTensor& p : params) {
    if (p.name == name) return p.value;
  }
  throw ConfigError("checkpoint lacks parameter " + name);
}

void Checkpoint::Restore(ParameterSet& target) const {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const NamedTensor& p : params) by_name[p.name] = &p.value;
  for (const auto& [name, v] : target.entries()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("checkpoint lacks parameter " + name);
    if (it->second->shape() != v.shape()) {
      throw ConfigError("checkpoint parameter " + name + " has shape " +
                        ShapeToString(it->second->shape()) + ", model expects " +
                        ShapeToString(v.shape()));
    }
    ad::Var handle = v;
    handle.mutable_value() = *it->second;
  }
}

void RoundParametersToStorage(ParameterSet& params) {
  for (const auto& [name, v] : params.entries()) {
    ad::Var handle = v;
    for (double& x : handle.mutable_value().storage()) {
      x = static_cast<double>(static_cast<float>(x));
    }
  }
}

}  // namespace ldmric
