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

#include "ldmric/metrics.h"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ldmric/errors.h"
#include "synthetic.h"
#include "temp_dir.h"

namespace ldmric {
namespace {

using testing::SyntheticScene;

Tensor Uniform(const Shape& s, uint64_t seed) {
  Rng rng(seed);
  return rng.UniformTensor(s, 0.0, 1.0);
}

Tensor Plus(Tensor t, double c) {
  for (double& v : t.storage()) v += c;
  return t;
}

TEST(PsnrTest, ClosedForms) {
  const Tensor a = Uniform({3, 16, 16}, 1);
  EXPECT_DOUBLE_EQ(Psnr(a, a), kPsnrCapDb);
  const Tensor gray({3, 16, 16}, 0.5);
  const double expected = 20.0 * std::log10(255.0 / 16.0);
  EXPECT_NEAR(expected, 24.05, 0.01);
  EXPECT_NEAR(Psnr(gray, Plus(gray, 16.0 / 255.0)), expected, 1e-9);
  EXPECT_NEAR(Psnr(Tensor({1, 4, 4}, 0.0), Tensor({1, 4, 4}, 1.0)), 0.0, 1e-12);
  EXPECT_NEAR(Psnr(Tensor({1, 4, 4}, 0.0), Tensor({1, 4, 4}, 255.0), 255.0), 0.0, 1e-12);
  EXPECT_THROW(Psnr(a, Tensor({3, 16, 15}, 0.0)), ShapeError);
}

TEST(PsnrTest, TranslationBehaviour) {
  const Tensor a = Uniform({3, 8, 8}, 2), b = Uniform({3, 8, 8}, 3);
  EXPECT_NEAR(Psnr(Plus(a, 0.3), Plus(b, 0.3)), Psnr(a, b), 1e-9);
  // Shifting one side by c adds c^2 to the MSE when the mean difference is
  // zero; use a == b so the closed form is exactly -20 log10(c).
  EXPECT_NEAR(Psnr(a, Plus(a, 0.1)), -20.0 * std::log10(0.1), 1e-9);
}

// Single-scale SSIM with an 11-tap Gaussian (sigma 1.5) and valid borders,
// evaluated with a direct 2-D window sum.
double DirectSsim(const Tensor& a, const Tensor& b, int c) {
  double g[11], norm = 0.0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5));
    norm += g[i];
  }
  for (double& v : g) v /= norm;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int h = a.dim(1), w = a.dim(2);
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + 11 <= h; ++y)
    for (int x = 0; x + 11 <= w; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wt = g[i] * g[j];
          const double va = a.at(c, y + i, x + j), vb = b.at(c, y + i, x + j);
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

TEST(MsSsimTest, SingleScaleMatchesDirectSsim) {
  const Tensor a = Uniform({3, 16, 20}, 4);
  Tensor b = a;
  Rng rng(5);
  for (double& v : b.storage()) v = std::clamp(v + 0.1 * rng.Normal(), 0.0, 1.0);
  double expected = 0.0;
  for (int c = 0; c < 3; ++c) expected += std::max(0.0, DirectSsim(a, b, c)) / 3.0;
  EXPECT_NEAR(MsSsim(a, b), expected, 1e-12);
}

TEST(MsSsimTest, ScaleCount) {
  EXPECT_EQ(MsSsimScales(256), 5);
  EXPECT_EQ(MsSsimScales(176), 5);
  EXPECT_EQ(MsSsimScales(175), 4);
  EXPECT_EQ(MsSsimScales(64), 3);
  EXPECT_EQ(MsSsimScales(32), 2);
  EXPECT_EQ(MsSsimScales(11), 1);
  EXPECT_THROW(MsSsim(Tensor({1, 10, 32}, 0.0), Tensor({1, 10, 32}, 0.0)), DataError);
}

TEST(MsSsimTest, IdentitySymmetryAndAntiCorrelation) {
  const Image a = SyntheticScene(64, 64, 1), b = SyntheticScene(64, 64, 2);
  EXPECT_EQ(MsSsim(a, a), 1.0);
  EXPECT_NEAR(MsSsim(a, b), MsSsim(b, a), 1e-9);
  Tensor board({1, 64, 64}), inverse({1, 64, 64});
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      board.at(0, y, x) = ((y / 4 + x / 4) % 2) ? 1.0 : 0.0;
      inverse.at(0, y, x) = 1.0 - board.at(0, y, x);
    }
  EXPECT_LT(MsSsim(board, inverse), 0.2);
}

TEST(MsSsimTest, BoundedOnRandomInputs) {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const int h = 11 + static_cast<int>(rng.Below(14));
    const int w = 11 + static_cast<int>(rng.Below(14));
    const Tensor a = rng.UniformTensor({1, h, w}, 0.0, 1.0);
    const Tensor b = rng.UniformTensor({1, h, w}, 0.0, 1.0);
    const double v = MsSsim(a, b);
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(RdCurveTest, GroupsAndSorts) {
  const std::vector<ImageScore> one = {{1.0, 0.5, 30.0, 0.9, 100, ""}};
  const auto single = RdCurve(one);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].bpp, 0.5);
  EXPECT_EQ(single[0].psnr_db, 30.0);
  EXPECT_EQ(single[0].ms_ssim, 0.9);
  EXPECT_EQ(single[0].n_images, 1);

  std::vector<ImageScore> scores = {{4.0, 2.0, 40.0, 0.99, 100, ""},
                                    {0.5, 0.2, 25.0, 0.80, 100, ""},
                                    {4.0, 1.0, 38.0, 0.97, 300, ""}};
  const auto curve = RdCurve(scores);
  ASSERT_EQ(curve.size(), 2u);
  EXPECT_EQ(curve[0].quality, 0.5);
  EXPECT_DOUBLE_EQ(curve[1].bpp, 1.5);
  EXPECT_DOUBLE_EQ(curve[1].psnr_db, 39.0);
  EXPECT_EQ(curve[1].n_images, 2);
  const auto total = RdCurve(scores, BppAggregation::kTotalBits);
  EXPECT_DOUBLE_EQ(total[1].bpp, (2.0 * 100 + 1.0 * 300) / 400.0);

  std::vector<ImageScore> doubled = scores;
  doubled.insert(doubled.end(), scores.begin(), scores.end());
  const auto twice = RdCurve(doubled);
  for (size_t i = 0; i < curve.size(); ++i) {
    EXPECT_DOUBLE_EQ(twice[i].bpp, curve[i].bpp);
    EXPECT_DOUBLE_EQ(twice[i].psnr_db, curve[i].psnr_db);
    EXPECT_DOUBLE_EQ(twice[i].ms_ssim, curve[i].ms_ssim);
  }
  EXPECT_THROW(RdCurve({}), DataError);
  EXPECT_THROW(ParseBppAggregation("median"), ConfigError);
}

TEST(RdCurveTest, CsvAndSvg) {
  std::vector<ImageScore> scores = {{1.0, 0.5, 30.0, 0.9, 64, "baseline"},
                                    {1.0, 0.5, 30.5, 0.92, 64, "enhanced"}};
  const auto curve = RdCurve(scores);
  std::ostringstream out;
  WriteRdCsv(out, curve);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
            "quality,bpp,psnr_db,ms_ssim,n_images,series");
  std::ostringstream plain;
  WriteRdCsv(plain, RdCurve({{1.0, 0.5, 30.0, 0.9, 64, ""}}));
  EXPECT_EQ(plain.str(), "quality,bpp,psnr_db,ms_ssim,n_images\n1,0.5,30,0.9,1\n");

  testing::TempDir dir;
  WriteRdCsv(dir.path() / "rd.csv", curve);
  const auto back = ReadRdCsv(dir.path() / "rd.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].series, curve[1].series);
  EXPECT_DOUBLE_EQ(back[1].psnr_db, curve[1].psnr_db);
  const std::string svg = RenderRdSvg(curve);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("enhanced"), std::string::npos);
}

TEST(MetricRegistryTest, BuiltinsAndExtensions) {
  auto& registry = MetricRegistry::Global();
  const Image a = SyntheticScene(32, 32, 1);
  EXPECT_DOUBLE_EQ(registry.Get("psnr")(a, a), kPsnrCapDb);
  EXPECT_DOUBLE_EQ(registry.Get("ms_ssim")(a, a), 1.0);
  registry.Register("zero", [](const Image&, const Image&) { return 0.0; });
  EXPECT_EQ(registry.Get("zero")(a, a), 0.0);
  EXPECT_THROW(registry.Get("lpips"), ConfigError);
}

}  // namespace
}  // namespace ldmric
