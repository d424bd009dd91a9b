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

#ifndef LDMRIC_CHECKPOINT_H_
#define LDMRIC_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ldmric/nn.h"
#include "ldmric/optimizer.h"

namespace ldmric {

struct CheckpointMeta {
  int stage = 1;
  std::string codec_tag;    // e.g. "blockdct@q=1"
  std::string config_hash;  // of the canonical config JSON
  std::string config_json;  // canonical config document
  std::vector<double> eta;  // diffusion schedule; empty for stage 1
  int64_t iteration = 0;
};

struct NamedTensor {
  std::string name;
  std::string module;  // first component of the name
  Tensor value;
};

// Directory layout:
//   manifest.json          stage, tags, config, schedule, parameter table
//   params/<name>.bin      raw little-endian float32, row-major
//   optimizer/<name>.m.bin, optimizer/<name>.v.bin  (optional)
class Checkpoint {
 public:
  static Checkpoint Capture(const CheckpointMeta& meta, const ParameterSet& params,
                            const Adam* optimizer = nullptr);
  static Checkpoint Load(const std::filesystem::path& dir);
  void Save(const std::filesystem::path& dir) const;

  // Copies every parameter of `params` from this checkpoint. A parameter
  // missing here or differing in shape is a ConfigError.
  void Restore(ParameterSet& params) const;
  bool Contains(const std::string& name) const;
  const Tensor& Get(const std::string& name) const;

  CheckpointMeta meta;
  std::vector<NamedTensor> params;
  std::optional<AdamState> optimizer;
};

// Values as they read back from disk (float32 rounding applied in place).
void RoundParametersToStorage(ParameterSet& params);

}  // namespace ldmric

#endif  // LDMRIC_CHECKPOINT_H_
