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

#ifndef LDMRIC_TRAINING_H_
#define LDMRIC_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ldmric/checkpoint.h"
#include "ldmric/config.h"
#include "ldmric/data.h"
#include "ldmric/image.h"
#include "ldmric/ldm.h"
#include "ldmric/lrm.h"
#include "ldmric/men.h"
#include "ldmric/nn.h"

namespace ldmric {

// Parameter name prefixes.
inline constexpr char kLrmPrefix[] = "lrm";
inline constexpr char kLrmDmPrefix[] = "lrm_dm";
inline constexpr char kDenoiserPrefix[] = "denoiser";
inline constexpr char kMenPrefix[] = "men";

// LRM + MEN. Parameters are rounded to float32 at construction so a fresh
// model equals its own saved checkpoint.
class Stage1Model {
 public:
  Stage1Model(const RunConfig& config, int image_channels, uint64_t seed);

  ad::Var Prior(const ad::Var& decoded, const ad::Var& original) const;
  ad::Var Enhance(const ad::Var& decoded, const ad::Var& original) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  ParameterSet params_;
  std::unique_ptr<Lrm> lrm_;
  std::unique_ptr<Men> men_;
};

// Frozen LRM plus the trainable LRM_DM, denoiser and MEN.
class Stage2Model {
 public:
  Stage2Model(const RunConfig& config, int image_channels, uint64_t seed);

  // Loads the frozen LRM and initializes LRM_DM and MEN from a stage-1
  // checkpoint. The denoiser keeps its fresh initialization.
  void InitFromStage1(const Checkpoint& stage1);

  ad::Var Prior(const ad::Var& decoded, const ad::Var& original) const;
  ad::Var Condition(const ad::Var& decoded) const;
  ad::Var Generate(const ad::Var& decoded, uint64_t seed) const;
  ad::Var Enhance(const ad::Var& decoded, uint64_t seed) const;

  const Lrm& lrm_dm() const { return *lrm_dm_; }
  const Denoiser& denoiser() const { return *denoiser_; }
  const Men& men() const { return *men_; }
  const NoiseSchedule& schedule() const { return schedule_; }

  // Trainable parameters (the stage-2 checkpoint content).
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& frozen() { return frozen_; }
  const ParameterSet& frozen() const { return frozen_; }

 private:
  ParameterSet frozen_, params_;
  NoiseSchedule schedule_;
  std::unique_ptr<Lrm> lrm_, lrm_dm_;
  std::unique_ptr<Denoiser> denoiser_;
  std::unique_ptr<Men> men_;
};

struct TrainLogRow {
  int64_t iteration = 0;  // 1-based
  double loss = 0.0;      // batch mean before the update
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  // When set, receives ckpt/ and log.csv.
  std::filesystem::path out_dir;
  int workers = 1;
  // Held-out pairs for early stopping.
  const PairedDataset* validation = nullptr;
  // Continue from a checkpoint of the same stage.
  const Checkpoint* resume = nullptr;
  std::function<void(const TrainLogRow&)> on_iteration;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
  bool stopped_early = false;
};

// Jointly trains LRM and MEN with the L1 loss between MEN(X~, LRM(X~, X))
// and X.
TrainResult TrainStage1(const RunConfig& config, const PairedDataset& data,
                        const TrainOptions& options = {});

// Phase A fits LRM_DM and the denoiser with the diffusion loss while MEN
// stays fixed. Phase B finetunes all three with
// L1(MEN(X~, F^), X) + L1(F^, F), where F^ comes from the full reverse chain.
TrainResult TrainStage2(const RunConfig& config, const PairedDataset& data,
                        const Checkpoint& stage1,
                        const TrainOptions& options = {});

// Number of phase-A iterations for a stage-2 run.
int64_t PhaseAIterations(const RunConfig& config);

// Image-in, image-out inference for a stage-2 checkpoint.
class Enhancer {
 public:
  // ConfigError unless the checkpoint is stage 2.
  explicit Enhancer(const Checkpoint& stage2);

  // ConfigError when the checkpoint was trained for a different codec
  // setting.
  void RequireCodecTag(const std::string& tag) const;

  Image Enhance(const Image& decoded, uint64_t seed) const;
  Tensor GeneratePrior(const Image& decoded, uint64_t seed) const;

  const RunConfig& config() const { return config_; }
  const std::string& codec_tag() const { return codec_tag_; }

 private:
  RunConfig config_;
  std::string codec_tag_;
  std::unique_ptr<Stage2Model> model_;
};

// Stage-1 inference, which needs the original image.
class Stage1Enhancer {
 public:
  explicit Stage1Enhancer(const Checkpoint& stage1);
  Image Enhance(const Image& decoded, const Image& original) const;
  Tensor Prior(const Image& decoded, const Image& original) const;

 private:
  RunConfig config_;
  std::unique_ptr<Stage1Model> model_;
};

// Rebuilds the run configuration stored in a checkpoint.
RunConfig ConfigFromCheckpoint(const Checkpoint& checkpoint);

// Smallest side multiple accepted by both LRM and MEN.
int SizeMultiple(const RunConfig& config);

// Edge-replicates a {C, H, W} tensor up to multiples of `multiple`.
Tensor PadToMultiple(const Tensor& x, int multiple);
Tensor CropTo(const Tensor& x, int height, int width);

// Writes rows as iteration,loss,lr,wall_ms.
void WriteTrainLog(const std::filesystem::path& path,
                   const std::vector<TrainLogRow>& rows, bool append = false);

}  // namespace ldmric

#endif  // LDMRIC_TRAINING_H_
