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

#ifndef LDMRIC_METRICS_H_
#define LDMRIC_METRICS_H_

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ldmric/image.h"

namespace ldmric {

inline constexpr double kPsnrCapDb = 100.0;

// 10 log10(peak^2 / MSE), capped at kPsnrCapDb. Operates on raw tensors so
// values outside [0, 1] are not clamped.
double Psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
double Psnr(const Image& a, const Image& b, double peak = 1.0);

// Number of MS-SSIM scales used for an image whose shorter side is
// `min_side`: the largest m <= 5 with min_side / 2^(m-1) >= 11, or 0.
int MsSsimScales(int min_side);

// Multi-scale SSIM with an 11-tap Gaussian window (sigma 1.5), weights
// (0.0448, 0.2856, 0.3001, 0.2363, 0.1333) renormalized over the scales
// used, C1 = (0.01 peak)^2, C2 = (0.03 peak)^2, valid filtering and 2x2
// average downsampling. Negative per-scale terms are clipped to zero.
// Computed per channel and averaged. Throws DataError below one scale.
double MsSsim(const Tensor& a, const Tensor& b, double peak = 1.0);
double MsSsim(const Image& a, const Image& b, double peak = 1.0);

using ImageMetric = std::function<double(const Image&, const Image&)>;

// Full-reference metrics by name; "psnr" and "ms_ssim" are built in.
class MetricRegistry {
 public:
  static MetricRegistry& Global();
  void Register(const std::string& name, ImageMetric metric);
  const ImageMetric& Get(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  MetricRegistry();
  std::map<std::string, ImageMetric> metrics_;
};

struct ImageScore {
  double quality = 0.0;
  double bpp = 0.0;
  double psnr_db = 0.0;
  double ms_ssim = 0.0;
  int64_t pixels = 0;  // used by total-bits aggregation
  std::string series;  // e.g. "baseline" or "enhanced"
};

struct RdPoint {
  double quality = 0.0;
  double bpp = 0.0;
  double psnr_db = 0.0;
  double ms_ssim = 0.0;
  int n_images = 0;
  std::string series;
};

enum class BppAggregation { kPerImageMean, kTotalBits };
BppAggregation ParseBppAggregation(const std::string& name);

// Groups by (series, quality), averages the metrics and sorts each series by
// bpp ascending. Throws DataError on empty input.
std::vector<RdPoint> RdCurve(const std::vector<ImageScore>& scores,
                             BppAggregation aggregation =
                                 BppAggregation::kPerImageMean);

// Header quality,bpp,psnr_db,ms_ssim,n_images; a trailing series column is
// added when any point carries a series tag.
void WriteRdCsv(std::ostream& out, const std::vector<RdPoint>& points);
void WriteRdCsv(const std::filesystem::path& path,
                const std::vector<RdPoint>& points);
std::vector<RdPoint> ReadRdCsv(const std::filesystem::path& path);

// Line plot of `metric` ("psnr_db" or "ms_ssim") against bpp, one polyline
// per series.
std::string RenderRdSvg(const std::vector<RdPoint>& points,
                        const std::string& metric = "psnr_db");

}  // namespace ldmric

#endif  // LDMRIC_METRICS_H_
