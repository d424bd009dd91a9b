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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ldmric/errors.h"

namespace ldmric {
namespace {

constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001,
                                                  0.2363, 0.1333};
constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

void RequireSameShape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + ShapeToString(a.shape()) +
                     " and " + ShapeToString(b.shape()) + " differ");
  }
}

const std::array<double, kWindow>& GaussianTaps() {
  static const auto taps = [] {
    std::array<double, kWindow> g{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double x = i - kWindow / 2;
      g[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
      sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
  }();
  return taps;
}

// Row-major plane.
struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

Plane Filter(const Plane& p) {
  const auto& g = GaussianTaps();
  Plane rows{p.h, p.w - kWindow + 1, {}};
  rows.v.assign(static_cast<size_t>(rows.h) * rows.w, 0.0);
  for (int y = 0; y < rows.h; ++y)
    for (int x = 0; x < rows.w; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * p.at(y, x + k);
      rows.at(y, x) = s;
    }
  Plane out{p.h - kWindow + 1, rows.w, {}};
  out.v.assign(static_cast<size_t>(out.h) * out.w, 0.0);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * rows.at(y + k, x);
      out.at(y, x) = s;
    }
  return out;
}

Plane Product(const Plane& a, const Plane& b) {
  Plane out{a.h, a.w, std::vector<double>(a.v.size())};
  for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

Plane Downsample(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, {}};
  out.v.resize(static_cast<size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      out.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) +
                             p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
    }
  return out;
}

// Mean SSIM and mean contrast-structure term over valid windows.
std::pair<double, double> SsimAndCs(const Plane& a, const Plane& b, double c1,
                                    double c2) {
  const Plane mu_a = Filter(a), mu_b = Filter(b);
  const Plane aa = Filter(Product(a, a)), bb = Filter(Product(b, b));
  const Plane ab = Filter(Product(a, b));
  double ssim = 0.0, cs = 0.0;
  for (size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = aa.v[i] - ma * ma, vb = bb.v[i] - mb * mb;
    const double cov = ab.v[i] - ma * mb;
    const double csv = (2.0 * cov + c2) / (va + vb + c2);
    const double lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    cs += csv;
    ssim += lum * csv;
  }
  const double n = static_cast<double>(mu_a.v.size());
  return {ssim / n, cs / n};
}

std::string FormatDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

double Psnr(const Tensor& a, const Tensor& b, double peak) {
  RequireSameShape(a, b, "psnr");
  if (!(peak > 0.0)) throw RangeError("psnr peak must be positive");
  if (a.size() == 0) throw DataError("psnr of empty images");
  double se = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

double Psnr(const Image& a, const Image& b, double peak) {
  return Psnr(a.tensor(), b.tensor(), peak);
}

int MsSsimScales(int min_side) {
  int m = 0;
  while (m < static_cast<int>(kMsSsimWeights.size()) &&
         (min_side >> m) >= kWindow) {
    ++m;
  }
  return m;
}

double MsSsim(const Tensor& a, const Tensor& b, double peak) {
  RequireSameShape(a, b, "ms_ssim");
  if (a.rank() != 3) throw ShapeError("ms_ssim expects {C, H, W} tensors");
  const int channels = a.dim(0), h = a.dim(1), w = a.dim(2);
  const int scales = MsSsimScales(std::min(h, w));
  if (scales < 1) {
    throw DataError("ms_ssim needs at least 11x11 pixels, got " +
                    std::to_string(h) + "x" + std::to_string(w));
  }
  double wsum = 0.0;
  for (int s = 0; s < scales; ++s) wsum += kMsSsimWeights[s];
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0.0;
  for (int c = 0; c < channels; ++c) {
    Plane pa{h, w, {}}, pb{h, w, {}};
    pa.v.assign(a.data() + static_cast<int64_t>(c) * h * w,
                a.data() + static_cast<int64_t>(c + 1) * h * w);
    pb.v.assign(b.data() + static_cast<int64_t>(c) * h * w,
                b.data() + static_cast<int64_t>(c + 1) * h * w);
    double value = 1.0;
    for (int s = 0; s < scales; ++s) {
      const auto [ssim, cs] = SsimAndCs(pa, pb, c1, c2);
      const double term = std::max(0.0, s + 1 == scales ? ssim : cs);
      value *= std::pow(term, kMsSsimWeights[s] / wsum);
      if (s + 1 < scales) {
        pa = Downsample(pa);
        pb = Downsample(pb);
      }
    }
    total += value;
  }
  return std::clamp(total / channels, 0.0, 1.0);
}

double MsSsim(const Image& a, const Image& b, double peak) {
  return MsSsim(a.tensor(), b.tensor(), peak);
}

MetricRegistry::MetricRegistry() {
  metrics_["psnr"] = [](const Image& a, const Image& b) { return Psnr(a, b); };
  metrics_["ms_ssim"] = [](const Image& a, const Image& b) { return MsSsim(a, b); };
}

MetricRegistry& MetricRegistry::Global() {
  static MetricRegistry registry;
  return registry;
}

void MetricRegistry::Register(const std::string& name, ImageMetric metric) {
  metrics_[name] = std::move(metric);
}

const ImageMetric& MetricRegistry::Get(const std::string& name) const {
  auto it = metrics_.find(name);
  if (it == metrics_.end()) throw ConfigError("unknown metric " + name);
  return it->second;
}

std::vector<std::string> MetricRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, metric] : metrics_) out.push_back(name);
  return out;
}

BppAggregation ParseBppAggregation(const std::string& name) {
  if (name == "per_image_mean") return BppAggregation::kPerImageMean;
  if (name == "total_bits") return BppAggregation::kTotalBits;
  throw ConfigError("unknown bpp aggregation '" + name +
                    "' (expected per_image_mean or total_bits)");
}

std::vector<RdPoint> RdCurve(const std::vector<ImageScore>& scores,
                             BppAggregation aggregation) {
  if (scores.empty()) throw DataError("rd_curve needs at least one result");
  struct Acc {
    double bpp = 0, bits = 0, pixels = 0, psnr = 0, ssim = 0;
    int n = 0;
  };
  std::map<std::pair<std::string, double>, Acc> groups;
  for (const ImageScore& s : scores) {
    Acc& acc = groups[{s.series, s.quality}];
    acc.bpp += s.bpp;
    acc.bits += s.bpp * static_cast<double>(s.pixels);
    acc.pixels += static_cast<double>(s.pixels);
    acc.psnr += s.psnr_db;
    acc.ssim += s.ms_ssim;
    ++acc.n;
  }
  std::vector<RdPoint> points;
  for (const auto& [key, acc] : groups) {
    RdPoint p;
    p.series = key.first;
    p.quality = key.second;
    p.n_images = acc.n;
    if (aggregation == BppAggregation::kTotalBits) {
      if (acc.pixels <= 0) throw DataError("total-bits aggregation needs pixel counts");
      p.bpp = acc.bits / acc.pixels;
    } else {
      p.bpp = acc.bpp / acc.n;
    }
    p.psnr_db = acc.psnr / acc.n;
    p.ms_ssim = acc.ssim / acc.n;
    points.push_back(p);
  }
  std::stable_sort(points.begin(), points.end(),
                   [](const RdPoint& a, const RdPoint& b) {
                     if (a.series != b.series) return a.series < b.series;
                     return a.bpp < b.bpp;
                   });
  return points;
}

void WriteRdCsv(std::ostream& out, const std::vector<RdPoint>& points) {
  const bool tagged = std::any_of(points.begin(), points.end(),
                                  [](const RdPoint& p) { return !p.series.empty(); });
  out << "quality,bpp,psnr_db,ms_ssim,n_images" << (tagged ? ",series" : "")
      << "\n";
  for (const RdPoint& p : points) {
    out << FormatDouble(p.quality) << ',' << FormatDouble(p.bpp) << ','
        << FormatDouble(p.psnr_db) << ',' << FormatDouble(p.ms_ssim) << ','
        << p.n_images;
    if (tagged) out << ',' << p.series;
    out << "\n";
  }
}

void WriteRdCsv(const std::filesystem::path& path,
                const std::vector<RdPoint>& points) {
  std::ofstream out(path, std::ios::binary);
  WriteRdCsv(out, points);
  if (!out) throw DataError("cannot write " + path.string());
}

std::vector<RdPoint> ReadRdCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("quality,bpp,psnr_db,ms_ssim,n_images", 0) != 0) {
    throw DataError(path.string() + ": unexpected header '" + line + "'");
  }
  std::vector<RdPoint> points;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() < 5) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected at least 5 columns");
    }
    try {
      RdPoint p;
      p.quality = std::stod(cols[0]);
      p.bpp = std::stod(cols[1]);
      p.psnr_db = std::stod(cols[2]);
      p.ms_ssim = std::stod(cols[3]);
      p.n_images = std::stoi(cols[4]);
      if (cols.size() > 5) p.series = cols[5];
      points.push_back(p);
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": malformed number");
    }
  }
  return points;
}

std::string RenderRdSvg(const std::vector<RdPoint>& points,
                        const std::string& metric) {
  if (metric != "psnr_db" && metric != "ms_ssim") {
    throw ConfigError("rd plot metric must be psnr_db or ms_ssim");
  }
  if (points.empty()) throw DataError("nothing to plot");
  auto value = [&](const RdPoint& p) {
    return metric == "psnr_db" ? p.psnr_db : p.ms_ssim;
  };
  double x0 = std::numeric_limits<double>::max(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const RdPoint& p : points) {
    x0 = std::min(x0, p.bpp);
    x1 = std::max(x1, p.bpp);
    y0 = std::min(y0, value(p));
    y1 = std::max(y1, value(p));
  }
  if (x1 - x0 < 1e-12) { x0 -= 0.5; x1 += 0.5; }
  if (y1 - y0 < 1e-12) { y0 -= 0.5; y1 += 0.5; }
  const double width = 640, height = 420, left = 70, right = 20, top = 20,
               bottom = 50;
  auto sx = [&](double x) {
    return left + (x - x0) / (x1 - x0) * (width - left - right);
  };
  auto sy = [&](double y) {
    return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom);
  };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\""
      << width - right << "\" y2=\"" << height - bottom
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
      << "\" y2=\"" << height - bottom << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">bpp</text>\n"
      << "<text x=\"16\" y=\"" << height / 2
      << "\" font-size=\"13\" transform=\"rotate(-90 16," << height / 2
      << ")\" text-anchor=\"middle\">" << metric << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    svg << "<text x=\"" << sx(xv) << "\" y=\"" << height - bottom + 16
        << "\" font-size=\"10\" text-anchor=\"middle\">" << FormatDouble(xv)
        << "</text>\n"
        << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 3
        << "\" font-size=\"10\" text-anchor=\"end\">" << FormatDouble(yv)
        << "</text>\n";
  }
  std::map<std::string, std::vector<const RdPoint*>> series;
  for (const RdPoint& p : points) series[p.series].push_back(&p);
  int idx = 0;
  for (const auto& [name, pts] : series) {
    const char* color = kColors[idx % 5];
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (const RdPoint* p : pts) svg << sx(p->bpp) << ',' << sy(value(*p)) << ' ';
    svg << "\"/>\n";
    for (const RdPoint* p : pts) {
      svg << "<circle cx=\"" << sx(p->bpp) << "\" cy=\"" << sy(value(*p))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    svg << "<text x=\"" << width - right - 110 << "\" y=\"" << top + 14 + 16 * idx
        << "\" font-size=\"12\" fill=\"" << color << "\">"
        << (name.empty() ? "rd" : name) << "</text>\n";
    ++idx;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace ldmric
