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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "files.h"
#include "ldmric/image.h"
#include "synthetic.h"
#include "temp_dir.h"

namespace ldmric::cli {
namespace {

namespace fs = std::filesystem;
using ldmric::testing::LogWithoutTiming;
using ldmric::testing::ReadFile;
using ldmric::testing::ReadTree;
using ldmric::testing::TempDir;
using ldmric::testing::WriteFile;

constexpr char kConfig[] = R"({
  "codec": {"id": "blockdct", "quality": 1, "qualities": [0.5, 1, 2, 4]},
  "data": {"root": "images", "crop_size": 16, "batch_size": 2},
  "lrm": {"widths": [4, 8], "latent_channels": 8, "latent_height": 2,
          "latent_width": 2, "residual_blocks": 1},
  "men": {"widths": [4, 8], "blocks": [1, 1], "heads": [1, 2],
          "prior_stages": 2},
  "ldm": {"steps": 2,
          "denoiser": {"hidden": 8, "blocks": 1, "heads": 2, "time_dim": 8}},
  "training": {"seed": 5,
               "stage1": {"iterations": 3, "lr": 1e-3},
               "stage2": {"iterations": 4, "lr": 1e-3}}
})";

struct Result {
  int code;
  std::string out, err;
};

Result Cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = Run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    fs::create_directories(dir() / "images");
    const auto images = ldmric::testing::SyntheticScenes(3, 32, 32, 21);
    for (size_t i = 0; i < images.size(); ++i) {
      WritePng(images[i], dir() / "images" / ("im" + std::to_string(i) + ".png"));
    }
    WriteFile(config(), kConfig);
  }

  fs::path dir() const { return tmp_.path(); }
  std::string config() const { return (dir() / "c.json").string(); }
  std::string path(const std::string& p) const { return (dir() / p).string(); }

  // Decoded versions of the images at the training quality.
  std::string MakeDecoded() {
    fs::create_directories(dir() / "decoded");
    BlockDctCodec codec;
    for (const std::string& n : ListPngs(dir() / "images")) {
      const Image x = ReadPng(dir() / "images" / n);
      WritePng(codec.Roundtrip(x, QualityParam(1.0)).decoded,
               dir() / "decoded" / n);
    }
    return path("decoded");
  }

  // Stage 1 then stage 2 into `prefix`1 and `prefix`2.
  void TrainBoth(const std::string& prefix) {
    ASSERT_EQ(Cli({"train", "--stage", "1", "--config", config(), "--out",
                   path(prefix + "1"), "--workers", "1"})
                  .code,
              kExitOk);
    ASSERT_EQ(Cli({"train", "--stage", "2", "--config", config(), "--out",
                   path(prefix + "2"), "--init-from", path(prefix + "1/ckpt"),
                   "--workers", "1"})
                  .code,
              kExitOk);
  }

  TempDir tmp_;
};

TEST_F(CliTest, TrainWritesCheckpointAndLog) {
  const Result r = Cli({"train", "--stage", "1", "--config", config(), "--out",
                        path("run1")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(dir() / "run1" / "ckpt" / "manifest.json"));
  const std::string log = ReadFile(dir() / "run1" / "log.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "iteration,loss,lr,wall_ms");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);
  EXPECT_NE(r.out.find("3 iterations"), std::string::npos) << r.out;
}

TEST_F(CliTest, StageTwoNeedsStageOne) {
  Result r = Cli({"train", "--stage", "2", "--config", config(), "--out",
                  path("run2")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--init-from"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir() / "run2"));
  TrainBoth("a");
  r = Cli({"train", "--stage", "2", "--config", config(), "--out", path("b2"),
           "--init-from", path("a2/ckpt")});
  EXPECT_EQ(r.code, kExitUsage);
  r = Cli({"train", "--stage", "1", "--config", config(), "--out", path("b1"),
           "--init-from", path("a1/ckpt")});
  EXPECT_EQ(r.code, kExitUsage);
  r = Cli({"train", "--stage", "3", "--config", config(), "--out", path("b1")});
  EXPECT_EQ(r.code, kExitUsage);
}

TEST_F(CliTest, InvalidConfigNamesTheLine) {
  WriteFile(config(), "{\n  \"data\": {\n    \"crop\": 16\n  }\n}\n");
  const Result r = Cli({"train", "--stage", "1", "--config", config(), "--out",
                        path("run1")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("c.json:3"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir() / "run1"));
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(Cli({}).code, kExitUsage);
  EXPECT_EQ(Cli({"fly"}).code, kExitUsage);
  EXPECT_EQ(Cli({"train", "--stage", "1"}).code, kExitUsage);
  EXPECT_EQ(Cli({"--help"}).code, kExitOk);
  EXPECT_EQ(Cli({"train", "--stage", "1", "--config", path("missing.json"),
                 "--out", path("x")})
                .code,
            kExitUsage);
}

TEST_F(CliTest, DivergenceIsRuntimeError) {
  std::string text = kConfig;
  text.replace(text.find("\"lr\": 1e-3"), 10, "\"lr\": 1e300, \"lr_floor\": 0");
  WriteFile(config(), text);
  const Result r = Cli({"train", "--stage", "1", "--config", config(), "--out",
                        path("run1")});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("diverged"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(dir() / "run1" / "ckpt" / "manifest.json"));
}

TEST_F(CliTest, EnhanceWritesImagesAndSummary) {
  TrainBoth("r");
  const std::string decoded = MakeDecoded();
  Result r = Cli({"enhance", "--ckpt", path("r2/ckpt"), "--input", decoded,
                  "--output", path("enh"), "--orig-dir", path("images"),
                  "--codec-tag", "blockdct@q=1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(ListPngs(dir() / "enh"), ListPngs(dir() / "images"));
  const Image e = ReadPng(dir() / "enh" / "im0.png");
  EXPECT_EQ(e.height(), 32);
  const std::string summary = ReadFile(dir() / "enh" / "summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')),
            "image,psnr_decoded_db,psnr_enhanced_db");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 4);

  r = Cli({"enhance", "--ckpt", path("r1/ckpt"), "--input", decoded,
           "--output", path("enh1")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("stage"), std::string::npos) << r.err;
  r = Cli({"enhance", "--ckpt", path("r2/ckpt"), "--input", decoded,
           "--output", path("enh2"), "--codec-tag", "blockdct@q=2"});
  EXPECT_EQ(r.code, kExitUsage);
  r = Cli({"enhance", "--ckpt", path("r2/ckpt"), "--input", path("enh2x"),
           "--output", path("enh3")});
  EXPECT_EQ(r.code, kExitUsage);
}

TEST_F(CliTest, RunsAreByteIdentical) {
  TrainBoth("x");
  TrainBoth("y");
  EXPECT_EQ(ReadTree(dir() / "x1" / "ckpt"), ReadTree(dir() / "y1" / "ckpt"));
  EXPECT_EQ(ReadTree(dir() / "x2" / "ckpt"), ReadTree(dir() / "y2" / "ckpt"));
  for (const char* run : {"1", "2"}) {
    EXPECT_EQ(LogWithoutTiming(ReadFile(dir() / ("x" + std::string(run)) / "log.csv")),
              LogWithoutTiming(ReadFile(dir() / ("y" + std::string(run)) / "log.csv")));
  }
  const std::string decoded = MakeDecoded();
  for (const char* run : {"x", "y"}) {
    ASSERT_EQ(Cli({"enhance", "--ckpt", path(std::string(run) + "2/ckpt"),
                   "--input", decoded, "--output", path(std::string(run) + "e"),
                   "--orig-dir", path("images"), "--seed", "9"})
                  .code,
              kExitOk);
    ASSERT_EQ(Cli({"evaluate", "--config", config(), "--ckpt",
                   path(std::string(run) + "2/ckpt"), "--out",
                   path(std::string(run) + "v"), "--workers", "1"})
                  .code,
              kExitOk);
  }
  EXPECT_EQ(ReadTree(dir() / "xe"), ReadTree(dir() / "ye"));
  EXPECT_EQ(ReadTree(dir() / "xv"), ReadTree(dir() / "yv"));
}

TEST_F(CliTest, EvaluateRows) {
  Result r = Cli({"evaluate", "--config", config(), "--out", path("base")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::string csv = ReadFile(dir() / "base" / "rd.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5) << csv;
  EXPECT_TRUE(fs::exists(dir() / "base" / "rd.svg"));

  TrainBoth("r");
  r = Cli({"evaluate", "--config", config(), "--ckpt", path("r2/ckpt"), "--out",
           path("matched")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  csv = ReadFile(dir() / "matched" / "rd.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6) << csv;
  EXPECT_NE(csv.find("enhanced"), std::string::npos);

  r = Cli({"evaluate", "--config", config(), "--ckpt", path("r2/ckpt"), "--out",
           path("all"), "--any-quality"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  csv = ReadFile(dir() / "all" / "rd.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9) << csv;

  std::string text = kConfig;
  text.replace(text.find("\"qualities\": [0.5, 1, 2, 4]"), 27, "\"qualities\": [3]");
  WriteFile(config(), text);
  r = Cli({"evaluate", "--config", config(), "--ckpt", path("r2/ckpt"), "--out",
           path("none")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--any-quality"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvaluateEmptyDataset) {
  fs::remove_all(dir() / "images");
  fs::create_directories(dir() / "images");
  const Result r = Cli({"evaluate", "--config", config(), "--out", path("o")});
  EXPECT_EQ(r.code, kExitUsage);
}

TEST_F(CliTest, RdPlot) {
  ASSERT_EQ(Cli({"evaluate", "--config", config(), "--out", path("e")}).code,
            kExitOk);
  Result r = Cli({"rd-plot", "--csv", path("e/rd.csv"), "--out", path("p.svg"),
                  "--metric", "ms_ssim"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(ReadFile(dir() / "p.svg").substr(0, 4), "<svg");
  r = Cli({"rd-plot", "--csv", path("e/rd.csv"), "--out", path("q.svg"),
           "--metric", "lpips"});
  EXPECT_EQ(r.code, kExitUsage);
  r = Cli({"rd-plot", "--csv", path("nope.csv"), "--out", path("q.svg")});
  EXPECT_EQ(r.code, kExitUsage);
}

}  // namespace
}  // namespace ldmric::cli
