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

#include "ldmric/training.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

#include "ldmric/errors.h"
#include "ldmric/ops.h"
#include "ldmric/optimizer.h"

namespace ldmric {
namespace fs = std::filesystem;

namespace {

constexpr uint64_t kStage1InitTag = 0x5354473149ull;
constexpr uint64_t kStage2InitTag = 0x5354473249ull;
constexpr uint64_t kShuffleTag = 0x42415443ull;
constexpr uint64_t kDiffusionTag = 0x4c444dull;
constexpr uint64_t kValidationTag = 0x56414cull;

void RestorePrefix(const Checkpoint& ckpt, ParameterSet& params,
                   const std::string& prefix) {
  const std::string head = prefix + ".";
  for (const auto& [name, v] : params.entries()) {
    if (name.rfind(head, 0) != 0) continue;
    if (!ckpt.Contains(name)) throw ConfigError("checkpoint lacks parameter " + name);
    const Tensor& value = ckpt.Get(name);
    if (value.shape() != v.shape()) {
      throw ConfigError("checkpoint parameter " + name + " has shape " +
                        ShapeToString(value.shape()) + ", model expects " +
                        ShapeToString(v.shape()));
    }
    ad::Var handle = v;
    handle.mutable_value() = value;
  }
}

std::vector<std::pair<std::string, ad::Var>> EntriesWithPrefix(
    const ParameterSet& params, const std::vector<std::string>& prefixes) {
  std::vector<std::pair<std::string, ad::Var>> out;
  for (const auto& entry : params.entries()) {
    for (const std::string& p : prefixes) {
      if (entry.first.rfind(p + ".", 0) == 0) {
        out.push_back(entry);
        break;
      }
    }
  }
  return out;
}

int ImageChannels(const PairedDataset& data) {
  if (data.empty()) throw DataError("training set is empty");
  return data[0].original.channels();
}

// Center crop of at most `crop` per side, trimmed to the size multiple.
PairedSample EvalCrop(const PairedSample& s, int crop, int multiple) {
  auto side = [&](int n) {
    const int c = std::min(n, crop);
    return c - c % multiple;
  };
  const int h = side(s.original.height()), w = side(s.original.width());
  if (h < multiple || w < multiple) {
    throw DataError("validation image " + s.id + " is smaller than " +
                    std::to_string(multiple) + " pixels");
  }
  const int y0 = (s.original.height() - h) / 2, x0 = (s.original.width() - w) / 2;
  return {s.original.Crop(y0, x0, h, w), s.decoded.Crop(y0, x0, h, w), s.bpp, s.id};
}

CheckpointMeta BaseMeta(const RunConfig& config, int stage) {
  CheckpointMeta meta;
  meta.stage = stage;
  meta.codec_tag = config.CodecTag();
  meta.config_hash = ConfigHash(config);
  meta.config_json = ToCanonicalJson(config);
  return meta;
}

void CheckResume(const Checkpoint& resume, const RunConfig& config, int stage) {
  if (resume.meta.stage != stage) {
    throw ConfigError("cannot resume stage " + std::to_string(stage) +
                      " from a stage " + std::to_string(resume.meta.stage) +
                      " checkpoint");
  }
  if (resume.meta.codec_tag != config.CodecTag()) {
    throw ConfigError("resume checkpoint was trained for " +
                      resume.meta.codec_tag + ", config selects " +
                      config.CodecTag());
  }
}

class Clock {
 public:
  double ElapsedMs() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Drops rows logged after the checkpoint a run resumes from.
void TruncateTrainLog(const fs::path& path, int64_t last) {
  std::ifstream in(path);
  std::string text, line;
  while (std::getline(in, line)) {
    if (!text.empty() && std::stoll(line) > last) break;
    text += line + "\n";
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

// Shared bookkeeping of the two training loops.
class Run {
 public:
  Run(const TrainOptions& options, int64_t resumed_from) : options_(options) {
    if (!options_.out_dir.empty()) {
      fs::create_directories(options_.out_dir);
      log_path_ = options_.out_dir / "log.csv";
      if (resumed_from > 0 && fs::exists(log_path_)) {
        TruncateTrainLog(log_path_, resumed_from);
      } else {
        WriteTrainLog(log_path_, {});
      }
    }
  }

  void Record(const TrainLogRow& row) {
    log_.push_back(row);
    if (!log_path_.empty()) WriteTrainLog(log_path_, {row}, /*append=*/true);
    if (options_.on_iteration) options_.on_iteration(row);
  }

  void Save(const Checkpoint& ckpt) const {
    if (!options_.out_dir.empty()) ckpt.Save(options_.out_dir / "ckpt");
  }

  [[noreturn]] void Diverged(const Checkpoint& last_good, int64_t iteration,
                             const std::string& detail) const {
    Save(last_good);
    std::string msg = "training diverged at iteration " +
                      std::to_string(iteration) + ": " + detail;
    if (!options_.out_dir.empty()) {
      msg += "; last good checkpoint kept in " +
             (options_.out_dir / "ckpt").string();
    }
    throw TrainingError(msg);
  }

  // Returns true once `patience` evaluations in a row failed to improve.
  bool ShouldStop(double value, int patience) {
    if (value < best_) {
      best_ = value;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= patience;
  }

  std::vector<TrainLogRow> TakeLog() { return std::move(log_); }

  const Clock& clock() const { return clock_; }

 private:
  const TrainOptions& options_;
  fs::path log_path_;
  std::vector<TrainLogRow> log_;
  Clock clock_;
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
};

AugmentConfig MakeAugment(const RunConfig& config) {
  AugmentConfig aug;
  aug.crop_size = config.data.crop_size;
  aug.hflip_prob = config.data.hflip_prob;
  aug.vflip_prob = config.data.vflip_prob;
  aug.seed = config.training.seed;
  aug.Validate();
  return aug;
}

}  // namespace

int SizeMultiple(const RunConfig& config) {
  return std::lcm(config.lrm.pu_factor, 1 << (config.men.scales() - 1));
}

Tensor PadToMultiple(const Tensor& x, int multiple) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return x;
  Tensor out(Shape{c, ph, pw});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < ph; ++y)
      for (int xx = 0; xx < pw; ++xx) {
        out.at(ch, y, xx) = x.at(ch, std::min(y, h - 1), std::min(xx, w - 1));
      }
  return out;
}

Tensor CropTo(const Tensor& x, int height, int width) {
  if (x.dim(1) == height && x.dim(2) == width) return x;
  Tensor out(Shape{x.dim(0), height, width});
  for (int ch = 0; ch < x.dim(0); ++ch)
    for (int y = 0; y < height; ++y)
      for (int xx = 0; xx < width; ++xx) out.at(ch, y, xx) = x.at(ch, y, xx);
  return out;
}

void WriteTrainLog(const fs::path& path, const std::vector<TrainLogRow>& rows,
                   bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  if (!append) out << "iteration,loss,lr,wall_ms\n";
  char buf[128];
  for (const TrainLogRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.3f\n",
                  static_cast<long long>(r.iteration), r.loss, r.lr, r.wall_ms);
    out << buf;
  }
}

RunConfig ConfigFromCheckpoint(const Checkpoint& checkpoint) {
  if (checkpoint.meta.config_json.empty()) {
    throw ConfigError("checkpoint carries no run configuration");
  }
  return ParseRunConfig(checkpoint.meta.config_json, "checkpoint config");
}

int64_t PhaseAIterations(const RunConfig& config) {
  return static_cast<int64_t>(
      std::llround(config.training.phase_a_fraction *
                   static_cast<double>(config.training.stage2.iterations)));
}

// ---------------------------------------------------------------------------

Stage1Model::Stage1Model(const RunConfig& config, int image_channels,
                         uint64_t seed) {
  Rng rng(DeriveSeed({seed, kStage1InitTag}));
  lrm_ = std::make_unique<Lrm>(params_, kLrmPrefix, config.lrm, 2, rng,
                               image_channels);
  men_ = std::make_unique<Men>(params_, kMenPrefix, config.men,
                               config.lrm.latent_channels, rng, image_channels);
  RoundParametersToStorage(params_);
}

ad::Var Stage1Model::Prior(const ad::Var& decoded, const ad::Var& original) const {
  return (*lrm_)(decoded, original);
}

ad::Var Stage1Model::Enhance(const ad::Var& decoded, const ad::Var& original) const {
  return (*men_)(decoded, Prior(decoded, original));
}

Stage2Model::Stage2Model(const RunConfig& config, int image_channels,
                         uint64_t seed)
    : schedule_(NoiseSchedule::Build(config.ldm.steps)) {
  Rng rng(DeriveSeed({seed, kStage2InitTag}));
  const int n = config.lrm.latent_channels;
  lrm_ = std::make_unique<Lrm>(frozen_, kLrmPrefix, config.lrm, 2, rng,
                               image_channels);
  lrm_dm_ = std::make_unique<Lrm>(params_, kLrmDmPrefix, config.lrm, 1, rng,
                                  image_channels);
  denoiser_ = std::make_unique<Denoiser>(params_, kDenoiserPrefix,
                                         config.ldm.denoiser, n, rng);
  men_ = std::make_unique<Men>(params_, kMenPrefix, config.men, n, rng,
                               image_channels);
  frozen_.SetTrainable(false);
  RoundParametersToStorage(frozen_);
  RoundParametersToStorage(params_);
}

void Stage2Model::InitFromStage1(const Checkpoint& stage1) {
  if (stage1.meta.stage != 1) {
    throw ConfigError("stage-2 initialization needs a stage-1 checkpoint, got stage " +
                      std::to_string(stage1.meta.stage));
  }
  RestorePrefix(stage1, frozen_, kLrmPrefix);
  InitSingleBranchFromLrm(params_, kLrmDmPrefix, frozen_, kLrmPrefix);
  RestorePrefix(stage1, params_, kMenPrefix);
}

ad::Var Stage2Model::Prior(const ad::Var& decoded, const ad::Var& original) const {
  ad::NoGradGuard guard;
  return ad::Var((*lrm_)(decoded, original).value());
}

ad::Var Stage2Model::Condition(const ad::Var& decoded) const {
  return (*lrm_dm_)(decoded);
}

ad::Var Stage2Model::Generate(const ad::Var& decoded, uint64_t seed) const {
  return GeneratePrior(*denoiser_, schedule_, Condition(decoded), seed);
}

ad::Var Stage2Model::Enhance(const ad::Var& decoded, uint64_t seed) const {
  return (*men_)(decoded, Generate(decoded, seed));
}

// ---------------------------------------------------------------------------

TrainResult TrainStage1(const RunConfig& config, const PairedDataset& data,
                        const TrainOptions& options) {
  const int channels = ImageChannels(data);
  const uint64_t seed = config.training.seed;
  Stage1Model model(config, channels, seed);
  Adam adam(model.params().entries(), config.Adam());
  int64_t start = 0;
  if (options.resume) {
    CheckResume(*options.resume, config, 1);
    options.resume->Restore(model.params());
    if (options.resume->optimizer) adam.LoadState(*options.resume->optimizer);
    start = options.resume->meta.iteration;
  }

  CheckpointMeta meta = BaseMeta(config, 1);
  auto capture = [&](int64_t iteration) {
    meta.iteration = iteration;
    return Checkpoint::Capture(meta, model.params(), &adam);
  };

  const StageSection& stage = config.training.stage1;
  const LrSchedule schedule = config.ScheduleFor(1);
  schedule.Validate();
  const int batch_size = config.data.batch_size;
  BatchLoader loader(data, MakeAugment(config), batch_size,
                     DeriveSeed({seed, kShuffleTag}), options.workers);
  for (int64_t i = 0; i < start; ++i) loader.Next();

  const int multiple = SizeMultiple(config);
  auto validation_loss = [&] {
    ad::NoGradGuard guard;
    double sum = 0.0;
    for (const PairedSample& s : options.validation->samples()) {
      const PairedSample c = EvalCrop(s, config.data.crop_size, multiple);
      ad::Var d(c.decoded.tensor()), o(c.original.tensor());
      sum += ad::L1Loss(model.Enhance(d, o), o).value()[0];
    }
    return sum / static_cast<double>(options.validation->size());
  };

  Run run(options, start);
  TrainResult result;
  int64_t it = start;
  for (; it < stage.iterations; ++it) {
    const double lr = schedule.At(it);
    const Batch batch = loader.Next();
    const double inv = 1.0 / static_cast<double>(batch.samples.size());
    double loss = 0.0;
    for (const PairedSample& s : batch.samples) {
      ad::Var d(s.decoded.tensor()), o(s.original.tensor());
      ad::Var l = ad::L1Loss(model.Enhance(d, o), o);
      const double v = l.value()[0];
      if (!std::isfinite(v)) {
        run.Diverged(capture(it), it + 1, "loss is not finite");
      }
      loss += v * inv;
      ad::Backward(ad::Scale(l, inv));
    }
    try {
      adam.Step(lr);
    } catch (const TrainingError& e) {
      adam.ZeroGrad();
      run.Diverged(capture(it), it + 1, e.what());
    }
    adam.ZeroGrad();
    run.Record({it + 1, loss, lr, run.clock().ElapsedMs()});

    const TrainingSection& t = config.training;
    if (t.checkpoint_every > 0 && (it + 1) % t.checkpoint_every == 0) {
      run.Save(capture(it + 1));
    }
    if (t.early_stop && options.validation && !options.validation->empty() &&
        (it + 1) % t.eval_every == 0 && run.ShouldStop(validation_loss(), t.patience)) {
      ++it;
      result.stopped_early = true;
      break;
    }
  }
  result.checkpoint = capture(it);
  run.Save(result.checkpoint);
  result.log = run.TakeLog();
  return result;
}

TrainResult TrainStage2(const RunConfig& config, const PairedDataset& data,
                        const Checkpoint& stage1, const TrainOptions& options) {
  if (stage1.meta.stage != 1) {
    throw ConfigError("stage-2 training must start from a stage-1 checkpoint, got stage " +
                      std::to_string(stage1.meta.stage));
  }
  if (stage1.meta.codec_tag != config.CodecTag()) {
    throw ConfigError("stage-1 checkpoint was trained for " + stage1.meta.codec_tag +
                      ", config selects " + config.CodecTag());
  }
  const int channels = ImageChannels(data);
  const uint64_t seed = config.training.seed;
  Stage2Model model(config, channels, seed);
  model.InitFromStage1(stage1);

  const int64_t phase_a = PhaseAIterations(config);
  Adam adam_a(EntriesWithPrefix(model.params(), {kLrmDmPrefix, kDenoiserPrefix}),
              config.Adam());
  Adam adam_b(model.params().entries(), config.Adam());
  int64_t start = 0;
  if (options.resume) {
    CheckResume(*options.resume, config, 2);
    options.resume->Restore(model.params());
    start = options.resume->meta.iteration;
    if (options.resume->optimizer) {
      if (start < phase_a) adam_a.LoadState(*options.resume->optimizer);
      if (start > phase_a) adam_b.LoadState(*options.resume->optimizer);
    }
  }

  CheckpointMeta meta = BaseMeta(config, 2);
  meta.eta = model.schedule().etas();
  auto capture = [&](int64_t iteration) {
    meta.iteration = iteration;
    return Checkpoint::Capture(meta, model.params(),
                               iteration <= phase_a ? &adam_a : &adam_b);
  };

  const StageSection& stage = config.training.stage2;
  const LrSchedule schedule_b = config.ScheduleFor(2);
  schedule_b.Validate();
  const NoiseSchedule& sched = model.schedule();
  const int steps = sched.steps();
  BatchLoader loader(data, MakeAugment(config), config.data.batch_size,
                     DeriveSeed({seed, kShuffleTag}), options.workers);
  for (int64_t i = 0; i < start; ++i) loader.Next();

  const int multiple = SizeMultiple(config);
  auto validation_loss = [&] {
    ad::NoGradGuard guard;
    double sum = 0.0;
    const auto& samples = options.validation->samples();
    for (size_t i = 0; i < samples.size(); ++i) {
      const PairedSample c = EvalCrop(samples[i], config.data.crop_size, multiple);
      ad::Var d(c.decoded.tensor()), o(c.original.tensor());
      const uint64_t s = DeriveSeed({seed, kValidationTag, i});
      sum += ad::L1Loss(model.Enhance(d, s), o).value()[0];
    }
    return sum / static_cast<double>(samples.size());
  };

  Run run(options, start);
  TrainResult result;
  int64_t it = start;
  for (; it < stage.iterations; ++it) {
    const bool in_a = it < phase_a;
    Adam& adam = in_a ? adam_a : adam_b;
    const double lr = in_a ? stage.lr : schedule_b.At(it - phase_a);
    const Batch batch = loader.Next();
    const double inv = 1.0 / static_cast<double>(batch.samples.size());
    double loss = 0.0;
    for (size_t k = 0; k < batch.samples.size(); ++k) {
      const PairedSample& s = batch.samples[k];
      Rng rng(DeriveSeed({seed, kDiffusionTag, static_cast<uint64_t>(it), k}));
      ad::Var d(s.decoded.tensor()), o(s.original.tensor());
      const ad::Var prior = model.Prior(d, o);
      const ad::Var condition = model.Condition(d);
      ad::Var l;
      if (in_a) {
        const DiffusionSample draw =
            DrawDiffusionSample(prior.shape(), sched, rng);
        l = DiffusionTrainingLoss(model.denoiser(), sched, prior.value(),
                                  condition, draw);
      } else {
        const Tensor eps = rng.NormalTensor(prior.shape());
        ad::Var start_state(ForwardDiffuse(prior.value(), steps, eps, sched));
        ad::Var generated =
            RunReverseChain(model.denoiser(), sched, condition, start_state, rng);
        l = ad::Add(ad::L1Loss(model.men()(d, generated), o),
                    ad::L1Loss(generated, prior));
      }
      const double v = l.value()[0];
      if (!std::isfinite(v)) {
        run.Diverged(capture(it), it + 1, "loss is not finite");
      }
      loss += v * inv;
      ad::Backward(ad::Scale(l, inv));
    }
    try {
      adam.Step(lr);
    } catch (const TrainingError& e) {
      adam.ZeroGrad();
      run.Diverged(capture(it), it + 1, e.what());
    }
    adam.ZeroGrad();
    run.Record({it + 1, loss, lr, run.clock().ElapsedMs()});

    const TrainingSection& t = config.training;
    if (t.checkpoint_every > 0 && (it + 1) % t.checkpoint_every == 0) {
      run.Save(capture(it + 1));
    }
    if (!in_a && t.early_stop && options.validation &&
        !options.validation->empty() && (it + 1 - phase_a) % t.eval_every == 0 &&
        run.ShouldStop(validation_loss(), t.patience)) {
      ++it;
      result.stopped_early = true;
      break;
    }
  }
  result.checkpoint = capture(it);
  run.Save(result.checkpoint);
  result.log = run.TakeLog();
  return result;
}

// ---------------------------------------------------------------------------

namespace {

int ChannelsFromCheckpoint(const Checkpoint& ckpt) {
  const std::string name = std::string(kMenPrefix) + ".embed.weight";
  if (!ckpt.Contains(name)) throw ConfigError("checkpoint lacks parameter " + name);
  const Tensor& w = ckpt.Get(name);
  if (w.rank() != 4) throw ConfigError("unexpected shape for " + name);
  return w.dim(1);
}

}  // namespace

Enhancer::Enhancer(const Checkpoint& stage2)
    : config_(ConfigFromCheckpoint(stage2)), codec_tag_(stage2.meta.codec_tag) {
  if (stage2.meta.stage != 2) {
    throw ConfigError("enhancement needs a stage-2 checkpoint; this one is stage " +
                      std::to_string(stage2.meta.stage) +
                      " and requires the original image");
  }
  model_ = std::make_unique<Stage2Model>(config_, ChannelsFromCheckpoint(stage2),
                                         config_.training.seed);
  stage2.Restore(model_->params());
  if (!stage2.meta.eta.empty() && stage2.meta.eta != model_->schedule().etas()) {
    throw ConfigError("checkpoint noise schedule does not match its configuration");
  }
}

void Enhancer::RequireCodecTag(const std::string& tag) const {
  if (tag != codec_tag_) {
    throw ConfigError("checkpoint was trained for " + codec_tag_ +
                      " but the input is " + tag);
  }
}

Tensor Enhancer::GeneratePrior(const Image& decoded, uint64_t seed) const {
  ad::NoGradGuard guard;
  const Tensor x = PadToMultiple(decoded.tensor(), SizeMultiple(config_));
  return model_->Generate(ad::Var(x), seed).value();
}

Image Enhancer::Enhance(const Image& decoded, uint64_t seed) const {
  ad::NoGradGuard guard;
  const Tensor x = PadToMultiple(decoded.tensor(), SizeMultiple(config_));
  const Tensor y = model_->Enhance(ad::Var(x), seed).value();
  return Image::FromTensorClamped(CropTo(y, decoded.height(), decoded.width()));
}

Stage1Enhancer::Stage1Enhancer(const Checkpoint& stage1)
    : config_(ConfigFromCheckpoint(stage1)) {
  if (stage1.meta.stage != 1) {
    throw ConfigError("expected a stage-1 checkpoint, got stage " +
                      std::to_string(stage1.meta.stage));
  }
  model_ = std::make_unique<Stage1Model>(config_, ChannelsFromCheckpoint(stage1),
                                         config_.training.seed);
  stage1.Restore(model_->params());
}

Tensor Stage1Enhancer::Prior(const Image& decoded, const Image& original) const {
  ad::NoGradGuard guard;
  const int m = SizeMultiple(config_);
  return model_
      ->Prior(ad::Var(PadToMultiple(decoded.tensor(), m)),
              ad::Var(PadToMultiple(original.tensor(), m)))
      .value();
}

Image Stage1Enhancer::Enhance(const Image& decoded, const Image& original) const {
  if (!decoded.SameShape(original)) {
    throw ShapeError("decoded and original images differ in shape");
  }
  ad::NoGradGuard guard;
  const int m = SizeMultiple(config_);
  const Tensor y = model_
                       ->Enhance(ad::Var(PadToMultiple(decoded.tensor(), m)),
                                 ad::Var(PadToMultiple(original.tensor(), m)))
                       .value();
  return Image::FromTensorClamped(CropTo(y, decoded.height(), decoded.width()));
}

}  // namespace ldmric
