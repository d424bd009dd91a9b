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

#include "cli.h"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "ldmric/checkpoint.h"
#include "ldmric/codec.h"
#include "ldmric/errors.h"
#include "ldmric/metrics.h"
#include "ldmric/training.h"

namespace ldmric::cli {
namespace fs = std::filesystem;

namespace {

struct Loaded {
  RunConfig config;
  fs::path base;
};

Loaded LoadConfig(const std::string& path, std::optional<uint64_t> seed,
                  std::optional<int> workers) {
  Loaded l{LoadRunConfig(path), fs::path(path).parent_path()};
  if (seed) l.config.training.seed = *seed;
  if (workers) {
    if (*workers < 1) throw ConfigError("--workers must be >= 1");
    l.config.data.workers = *workers;
  }
  return l;
}

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  int stage = 0;
  std::string config, out, init_from, resume;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
};

int Train(const TrainArgs& a, std::ostream& out) {
  // Everything is validated before the output directory is touched.
  if (a.stage != 1 && a.stage != 2) throw ConfigError("--stage must be 1 or 2");
  if (a.stage == 2 && a.init_from.empty()) {
    throw ConfigError("stage 2 requires --init-from <stage-1 checkpoint>");
  }
  if (a.stage == 1 && !a.init_from.empty()) {
    throw ConfigError("--init-from applies to stage 2 only");
  }
  const Loaded l = LoadConfig(a.config, a.seed, a.workers);
  const RunConfig& config = l.config;
  std::optional<Checkpoint> stage1, resume;
  if (!a.init_from.empty()) {
    stage1 = Checkpoint::Load(a.init_from);
    if (stage1->meta.stage != 1) {
      throw ConfigError("--init-from " + a.init_from + " is a stage " +
                        std::to_string(stage1->meta.stage) +
                        " checkpoint; stage 2 needs stage 1");
    }
    if (stage1->meta.codec_tag != config.CodecTag()) {
      throw ConfigError("--init-from was trained for " + stage1->meta.codec_tag +
                        ", config selects " + config.CodecTag());
    }
  }
  if (!a.resume.empty()) resume = Checkpoint::Load(a.resume);
  const int workers = config.data.workers;
  const PairedDataset data = LoadPairs(config, l.base, config.data.manifest, workers);
  PairedDataset validation;
  if (!config.data.val_manifest.empty()) {
    validation = LoadPairs(config, l.base, config.data.val_manifest, workers);
  }

  TrainOptions options;
  options.out_dir = a.out;
  options.workers = workers;
  if (!validation.empty()) options.validation = &validation;
  if (resume) options.resume = &*resume;
  const TrainResult result = a.stage == 1
                                 ? TrainStage1(config, data, options)
                                 : TrainStage2(config, data, *stage1, options);
  out << "stage " << a.stage << ": " << result.checkpoint.meta.iteration
      << " iterations";
  if (!result.log.empty()) {
    out << ", loss " << FormatDouble(result.log.front().loss) << " -> "
        << FormatDouble(result.log.back().loss);
  }
  if (result.stopped_early) out << " (early stop)";
  out << "\ncheckpoint: " << (fs::path(a.out) / "ckpt").string() << "\n";
  return kExitOk;
}

// -------------------------------------------------------------- enhance

struct EnhanceArgs {
  std::string ckpt, input, output, orig_dir, codec_tag;
  uint64_t seed = 0;
  int workers = 1;
};

int Enhance(const EnhanceArgs& a, std::ostream& out) {
  const Checkpoint ckpt = Checkpoint::Load(a.ckpt);
  const Enhancer enhancer(ckpt);
  if (!a.codec_tag.empty()) enhancer.RequireCodecTag(a.codec_tag);
  const std::vector<std::string> names = ListPngs(a.input);
  if (names.empty()) throw DataError("no PNG images in " + a.input);
  std::vector<Image> inputs, originals;
  for (const std::string& n : names) {
    inputs.push_back(ReadPng(fs::path(a.input) / n));
    if (!a.orig_dir.empty()) {
      originals.push_back(ReadPng(fs::path(a.orig_dir) / n));
      if (!originals.back().SameShape(inputs.back())) {
        throw DataError(n + ": original and decoded images differ in shape");
      }
    }
  }
  if (a.workers < 1) throw ConfigError("--workers must be >= 1");
  fs::create_directories(a.output);
  std::vector<Image> enhanced(names.size());
  ParallelFor(names.size(), a.workers, [&](size_t i) {
    enhanced[i] = enhancer.Enhance(inputs[i], a.seed).Quantized8();
  });
  std::ostringstream summary;
  summary << "image,psnr_decoded_db,psnr_enhanced_db\n";
  for (size_t i = 0; i < names.size(); ++i) {
    WritePng(enhanced[i], fs::path(a.output) / names[i]);
    if (!originals.empty()) {
      summary << names[i] << "," << FormatDouble(Psnr(inputs[i], originals[i]))
              << "," << FormatDouble(Psnr(enhanced[i], originals[i])) << "\n";
    }
  }
  if (!originals.empty()) {
    std::ofstream f(fs::path(a.output) / "summary.csv");
    f << summary.str();
  }
  out << "enhanced " << names.size() << " images into " << a.output << "\n";
  return kExitOk;
}

// ------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string config, out = ".";
  std::vector<std::string> ckpts;
  bool any_quality = false;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
};

std::string TagFor(const RunConfig& config, double q) {
  RunConfig c = config;
  c.codec.quality = q;
  return c.CodecTag();
}

int Evaluate(const EvaluateArgs& a, std::ostream& out) {
  const Loaded l = LoadConfig(a.config, a.seed, a.workers);
  const RunConfig& config = l.config;
  std::vector<std::unique_ptr<Enhancer>> enhancers;
  for (const std::string& c : a.ckpts) {
    enhancers.push_back(std::make_unique<Enhancer>(Checkpoint::Load(c)));
  }
  const double peak = config.metrics.peak;
  const BppAggregation aggregation =
      ParseBppAggregation(config.metrics.bpp_aggregation);
  const uint64_t seed = config.training.seed;
  const int workers = config.data.workers;

  // One (quality, pairs) group per rate point.
  std::vector<std::pair<double, PairedDataset>> groups;
  if (config.codec.id == "precomputed") {
    groups.emplace_back(config.codec.quality,
                        LoadPairs(config, l.base, "", workers));
  } else {
    const fs::path root = ResolvePath(
        l.base, config.data.eval_root.empty() ? config.data.root
                                              : config.data.eval_root);
    auto codec = MakeCodecFromEnvironment(config.MakeCodecConfig());
    for (double q : config.codec.qualities) {
      groups.emplace_back(
          q, PairedDataset::FromOriginals(root, "", *codec, QualityParam(q), workers));
    }
  }

  std::vector<ImageScore> scores;
  int enhanced_groups = 0;
  for (const auto& [q, pairs] : groups) {
    const std::string tag = TagFor(config, q);
    const Enhancer* match = nullptr;
    for (const auto& e : enhancers) {
      if (e->codec_tag() == tag) match = e.get();
    }
    if (!match && a.any_quality && !enhancers.empty()) match = enhancers.front().get();
    if (match) ++enhanced_groups;
    std::vector<ImageScore> local(pairs.size() * (match ? 2 : 1));
    ParallelFor(pairs.size(), workers, [&](size_t i) {
      const PairedSample& s = pairs[i];
      local[i] = {q, s.bpp, Psnr(s.decoded, s.original, peak),
                  MsSsim(s.decoded, s.original, peak), s.original.num_pixels(),
                  "baseline"};
      if (match) {
        const Image e = match->Enhance(s.decoded, seed).Quantized8();
        local[pairs.size() + i] = {q, s.bpp, Psnr(e, s.original, peak),
                                   MsSsim(e, s.original, peak),
                                   s.original.num_pixels(), "enhanced"};
      }
    });
    scores.insert(scores.end(), local.begin(), local.end());
  }
  if (!enhancers.empty() && enhanced_groups == 0) {
    throw ConfigError("no checkpoint matches the evaluated codec settings; "
                      "pass --any-quality to apply it regardless");
  }

  const std::vector<RdPoint> curve = RdCurve(scores, aggregation);
  fs::create_directories(a.out);
  WriteRdCsv(fs::path(a.out) / "rd.csv", curve);
  std::ofstream(fs::path(a.out) / "rd.svg") << RenderRdSvg(curve, "psnr_db");
  out << "wrote " << curve.size() << " rate points to "
      << (fs::path(a.out) / "rd.csv").string() << "\n";
  return kExitOk;
}

// -------------------------------------------------------------- rd-plot

int RdPlot(const std::string& csv, const std::string& svg,
           const std::string& metric, std::ostream& out) {
  if (metric != "psnr_db" && metric != "ms_ssim") {
    throw ConfigError("--metric must be psnr_db or ms_ssim");
  }
  const std::vector<RdPoint> points = ReadRdCsv(csv);
  std::ofstream f(svg);
  if (!f) throw DataError("cannot write " + svg);
  f << RenderRdSvg(points, metric);
  out << "wrote " << svg << "\n";
  return kExitOk;
}

}  // namespace

fs::path ResolvePath(const fs::path& base, const std::string& path) {
  if (path.empty()) return {};
  const fs::path p(path);
  return p.is_absolute() || base.empty() ? p : base / p;
}

PairedDataset LoadPairs(const RunConfig& config, const fs::path& base,
                        const std::string& manifest, int workers) {
  const fs::path m = ResolvePath(base, manifest);
  if (config.codec.id == "precomputed") {
    return PairedDataset::FromPrecomputed(
        ResolvePath(base, config.codec.precomputed_root), m, workers);
  }
  if (config.data.root.empty()) throw ConfigError("data.root is not set");
  auto codec = MakeCodecFromEnvironment(config.MakeCodecConfig());
  return PairedDataset::FromOriginals(ResolvePath(base, config.data.root), m,
                                      *codec, QualityParam(config.codec.quality),
                                      workers);
}

int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Latent-diffusion distortion prior for compressed images", "ldmric"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train stage 1 or stage 2");
  train_cmd->add_option("--stage", train.stage, "1 or 2")->required();
  train_cmd->add_option("--config", train.config, "Run configuration (JSON)")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--init-from", train.init_from, "Stage-1 checkpoint (stage 2)");
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint");
  train_cmd->add_option("--seed", train.seed, "Overrides training.seed");
  train_cmd->add_option("--workers", train.workers, "Data loading threads");

  EnhanceArgs enhance;
  auto* enhance_cmd = app.add_subcommand("enhance", "Enhance decoded images");
  enhance_cmd->add_option("--ckpt", enhance.ckpt, "Stage-2 checkpoint")->required();
  enhance_cmd->add_option("--input", enhance.input, "Directory of decoded PNGs")->required();
  enhance_cmd->add_option("--output", enhance.output, "Output directory")->required();
  enhance_cmd->add_option("--orig-dir", enhance.orig_dir,
                          "Originals for summary.csv");
  enhance_cmd->add_option("--codec-tag", enhance.codec_tag,
                          "Refuse checkpoints trained for another codec setting");
  enhance_cmd->add_option("--seed", enhance.seed, "Prior sampling seed");
  enhance_cmd->add_option("--workers", enhance.workers, "Worker threads");

  EvaluateArgs evaluate;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Rate-distortion evaluation");
  evaluate_cmd->add_option("--config", evaluate.config, "Run configuration")->required();
  evaluate_cmd->add_option("--ckpt", evaluate.ckpts, "Stage-2 checkpoint(s)");
  evaluate_cmd->add_option("--out", evaluate.out, "Output directory");
  evaluate_cmd->add_flag("--any-quality", evaluate.any_quality,
                         "Apply the first checkpoint at every quality");
  evaluate_cmd->add_option("--seed", evaluate.seed, "Overrides training.seed");
  evaluate_cmd->add_option("--workers", evaluate.workers, "Worker threads");

  std::string csv, svg, metric = "psnr_db";
  auto* plot_cmd = app.add_subcommand("rd-plot", "Render rd.csv as SVG");
  plot_cmd->add_option("--csv", csv, "Input rd.csv")->required();
  plot_cmd->add_option("--out", svg, "Output SVG")->required();
  plot_cmd->add_option("--metric", metric, "psnr_db or ms_ssim");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*train_cmd) return Train(train, out);
    if (*enhance_cmd) return Enhance(enhance, out);
    if (*evaluate_cmd) return Evaluate(evaluate, out);
    if (*plot_cmd) return RdPlot(csv, svg, metric, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const RangeError& e) {
    err << "range error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const BackendError& e) {
    err << "codec backend failed (status " << e.status() << "): " << e.what() << "\n";
    return kExitRuntime;
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ldmric::cli
