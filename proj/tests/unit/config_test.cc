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

#include "ldmric/config.h"

#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "ldmric/errors.h"
#include "temp_dir.h"

namespace ldmric {
namespace {

using testing::TempDir;

std::string ErrorOf(const std::string& text) {
  try {
    ParseRunConfig(text, "run.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, EmptyDocumentGivesDefaults) {
  const RunConfig c = ParseRunConfig("{}");
  EXPECT_EQ(c.lrm.pu_factor, 4);
  EXPECT_EQ(c.lrm.latent_channels, 256);
  EXPECT_EQ(c.lrm.tokens(), 16);
  EXPECT_EQ(c.men.widths, (std::vector<int>{48, 96, 192}));
  EXPECT_EQ(c.men.prior_stages, 3);
  EXPECT_EQ(c.ldm.steps, 4);
  EXPECT_EQ(c.training.stage1.iterations, 2000);
  EXPECT_EQ(c.training.stage1.lr, 1e-4);
  EXPECT_EQ(c.training.stage1.lr_schedule, "cosine");
  EXPECT_EQ(c.training.stage2.iterations, 3000);
  EXPECT_EQ(c.training.stage2.lr_schedule, "step");
  EXPECT_EQ(c.training.stage2.decay_every, 80000);
  EXPECT_EQ(c.training.beta1, 0.9);
  EXPECT_EQ(c.training.beta2, 0.999);
  EXPECT_EQ(c.data.crop_size, 64);
  EXPECT_EQ(c.metrics.bpp_aggregation, "per_image_mean");
}

TEST(ConfigTest, SchedulesFollowStages) {
  const RunConfig c = ParseRunConfig("{}");
  const LrSchedule s1 = c.ScheduleFor(1);
  EXPECT_EQ(s1.kind, LrSchedule::Kind::kCosine);
  EXPECT_EQ(s1.total, 2000);
  EXPECT_EQ(s1.hold, 613);
  EXPECT_EQ(s1.floor, 1e-6);
  const LrSchedule s2 = c.ScheduleFor(2);
  EXPECT_EQ(s2.kind, LrSchedule::Kind::kStep);
  EXPECT_EQ(s2.total, 1500);
  const AdamConfig adam = c.Adam();
  EXPECT_EQ(adam.eps, 1e-8);
}

TEST(ConfigTest, UnknownKeyReportsLine) {
  const std::string text = "{\n  \"men\": {\n    \"widths\": [8, 16],\n"
                           "    \"blocks\": [1, 1],\n    \"heads\": [1, 1],\n"
                           "    \"colour\": 3\n  }\n}\n";
  const std::string msg = ErrorOf(text);
  EXPECT_NE(msg.find("run.json:6"), std::string::npos) << msg;
  EXPECT_NE(msg.find("men.colour"), std::string::npos) << msg;
  EXPECT_NE(ErrorOf("{\"extra\": 1}").find("run.json:1"), std::string::npos);
}

TEST(ConfigTest, TypeAndRangeErrorsReportLine) {
  const std::string msg =
      ErrorOf("{\n\"lrm\": {\n\"widths\": [64, \"x\"]\n}\n}");
  EXPECT_NE(msg.find("run.json:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("lrm.widths[1]"), std::string::npos) << msg;
  EXPECT_NE(ErrorOf("{\"data\": {\"crop_size\": 64.5}}"), "");
  EXPECT_NE(ErrorOf("{\"data\": {\"hflip_prob\": 1.5}}"), "");
  EXPECT_NE(ErrorOf("{\"data\": {\"batch_size\": 0}}"), "");
  EXPECT_NE(ErrorOf("{\"codec\": {\"id\": \"webp\"}}"), "");
  EXPECT_NE(ErrorOf("{\"codec\": {\"quality\": 0}}"), "");
  EXPECT_NE(ErrorOf("{\"codec\": {\"id\": \"external\", "
                    "\"external_command\": \"enc in out\"}}"),
            "");
  EXPECT_NE(ErrorOf("{\"training\": {\"stage1\": {\"lr\": -1}}}"), "");
  EXPECT_NE(ErrorOf("{\"training\": {\"stage2\": {\"lr_schedule\": \"exp\"}}}"),
            "");
  EXPECT_NE(ErrorOf("{\"training\": {\"seed\": -3}}"), "");
  EXPECT_NE(ErrorOf("{\"training\": {\"phase_a_fraction\": 2}}"), "");
  EXPECT_NE(ErrorOf("{\"metrics\": {\"bpp_aggregation\": \"median\"}}"), "");
  EXPECT_NE(ErrorOf("{\"ldm\": {\"steps\": 0}}"), "");
  EXPECT_NE(ErrorOf("{\"men\": {\"heads\": [1, 2]}}"), "");
  EXPECT_NE(ErrorOf("[]"), "");
}

TEST(ConfigTest, CropMustSuitBothNetworks) {
  // Three MEN scales need multiples of 4; pu_factor 8 needs multiples of 8.
  EXPECT_NE(ErrorOf("{\"data\": {\"crop_size\": 36}, "
                    "\"lrm\": {\"pu_factor\": 8}}"),
            "");
  EXPECT_NE(ErrorOf("{\"data\": {\"crop_size\": 42}, "
                    "\"lrm\": {\"pu_factor\": 2}}"),
            "");
  EXPECT_EQ(ErrorOf("{\"data\": {\"crop_size\": 40}, "
                    "\"lrm\": {\"pu_factor\": 8}}"),
            "");
}

TEST(ConfigTest, SyntaxErrorReportsLine) {
  const std::string msg = ErrorOf("{\n\"data\": {\n\"crop_size\": 64,,\n}\n}");
  EXPECT_NE(msg.find("run.json:3"), std::string::npos) << msg;
}

TEST(ConfigTest, CanonicalJsonRoundTrips) {
  RunConfig c = ParseRunConfig(
      "{\"codec\": {\"quality\": 2.5}, \"training\": {\"seed\": 18446744073709551615}}");
  EXPECT_EQ(c.training.seed, 18446744073709551615ull);
  const std::string canonical = ToCanonicalJson(c);
  const RunConfig back = ParseRunConfig(canonical);
  EXPECT_EQ(ToCanonicalJson(back), canonical);
  EXPECT_EQ(ConfigHash(back), ConfigHash(c));
  EXPECT_EQ(ConfigHash(c).size(), 16u);
  c.codec.quality = 2.0;
  EXPECT_NE(ConfigHash(back), ConfigHash(c));
  const nlohmann::json j = nlohmann::json::parse(canonical);
  for (const char* key :
       {"codec", "data", "lrm", "men", "ldm", "training", "metrics"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(ConfigTest, CodecTags) {
  RunConfig c = ParseRunConfig("{\"codec\": {\"quality\": 0.5}}");
  EXPECT_EQ(c.CodecTag(), "blockdct@q=0.5");
  c = ParseRunConfig("{\"codec\": {\"id\": \"identity\", \"quality\": 3}}");
  EXPECT_EQ(c.CodecTag(), "identity@q=3");
  c = ParseRunConfig(
      "{\"codec\": {\"id\": \"precomputed\", \"precomputed_root\": \"/d/q4/\"}}");
  EXPECT_EQ(c.CodecTag(), "precomputed@q4");
}

TEST(ConfigTest, LocateJsonLine) {
  const std::string text = "{\n \"a\": {\n  \"b\": [1,\n 2]\n }\n}";
  EXPECT_EQ(LocateJsonLine(text, "a"), 2);
  EXPECT_EQ(LocateJsonLine(text, "a.b"), 3);
  EXPECT_EQ(LocateJsonLine(text, "a.b[1]"), 4);
  EXPECT_EQ(LocateJsonLine(text, "a.c"), 0);
}

TEST(ConfigTest, LoadFromFile) {
  TempDir tmp;
  const auto path = tmp.path() / "c.json";
  std::ofstream(path) << "{\n\"data\": {\"crop_size\": 32}\n}\n";
  EXPECT_EQ(LoadRunConfig(path).data.crop_size, 32);
  EXPECT_THROW(LoadRunConfig(tmp.path() / "missing.json"), ConfigError);
  std::ofstream(path) << "{\n\"data\": {\"crop\": 32}\n}\n";
  try {
    LoadRunConfig(path);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("c.json:2"), std::string::npos)
        << e.what();
  }
}

}  // namespace
}  // namespace ldmric
