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

#ifndef LDMRIC_CONFIG_H_
#define LDMRIC_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ldmric/codec.h"
#include "ldmric/ldm.h"
#include "ldmric/lrm.h"
#include "ldmric/men.h"
#include "ldmric/optimizer.h"

namespace ldmric {

struct CodecSection {
  std::string id = "blockdct";
  double quality = 1.0;                          // training quality
  std::vector<double> qualities = {0.5, 1, 2, 4};  // evaluation sweep
  std::string external_command;
  std::string precomputed_root;
};

struct DataSection {
  std::string root;          // originals (or precomputed root)
  std::string manifest;      // optional training list
  std::string val_manifest;  // optional held-out list for early stopping
  std::string eval_root;     // evaluation originals; defaults to root
  int crop_size = 64;
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  int batch_size = 4;
  int workers = 1;
};

struct StageSection {
  int64_t iterations = 0;
  double lr = 1e-4;
  std::string lr_schedule = "cosine";
  double lr_floor = 1e-6;
  double cosine_hold_fraction = 0.0;
  int64_t decay_every = 80000;
  double decay_factor = 0.1;
};

struct TrainingSection {
  uint64_t seed = 0;
  StageSection stage1{2000, 1e-4, "cosine", 1e-6, 92.0 / 300.0, 80000, 0.1};
  StageSection stage2{3000, 1e-4, "step", 1e-6, 0.0, 80000, 0.1};
  double phase_a_fraction = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool early_stop = false;
  int64_t eval_every = 200;
  int patience = 5;
  int64_t checkpoint_every = 0;  // 0 keeps only the final checkpoint
};

struct LdmSection {
  int steps = 4;
  DenoiserConfig denoiser;
};

struct MetricsSection {
  double peak = 1.0;
  std::string bpp_aggregation = "per_image_mean";
};

struct RunConfig {
  CodecSection codec;
  DataSection data;
  LrmConfig lrm;
  MenConfig men;
  LdmSection ldm;
  TrainingSection training;
  MetricsSection metrics;

  CodecConfig MakeCodecConfig() const;
  // Identifies the codec and quality a model was trained for.
  std::string CodecTag() const;
  LrSchedule ScheduleFor(int stage) const;
  AdamConfig Adam() const;
};

// Parses and validates a JSON document. Unknown keys, wrong types and
// out-of-range values throw ConfigError("<source>:<line>: ...").
RunConfig ParseRunConfig(const std::string& text,
                         const std::string& source = "<config>");
RunConfig LoadRunConfig(const std::filesystem::path& path);

// Canonical JSON with every field spelled out.
std::string ToCanonicalJson(const RunConfig& config);
// 16 hex digits of FNV-1a over the canonical JSON.
std::string ConfigHash(const RunConfig& config);

// 1-based line of the value at `path` (e.g. "men.widths[1]") in JSON `text`,
// or 0 when absent.
int LocateJsonLine(const std::string& text, const std::string& path);

}  // namespace ldmric

#endif  // LDMRIC_CONFIG_H_
