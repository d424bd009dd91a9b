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

#include "ldmric/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include "ldmric/errors.h"

namespace ldmric::ad {
namespace {

using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

bool Needs(const Node& n, size_t i) {
  return i < n.inputs.size() && n.inputs[i] && n.inputs[i]->requires_grad;
}

Tensor& GradOf(Node& n, size_t i) { return n.inputs[i]->GradBuffer(); }
const Tensor& ValueOf(const Node& n, size_t i) { return n.inputs[i]->value; }

// Fixed lane split keeps the sum independent of buffer alignment.
double Dot(const double* a, const double* b, int64_t n) {
  double lane[8] = {};
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) lane[j] += a[i + j] * b[i + j];
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
         ((lane[4] + lane[5]) + (lane[6] + lane[7])) + tail;
}

double SumLanes(const double* a, int64_t n) {
  double lane[8] = {};
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) lane[j] += a[i + j];
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
         ((lane[4] + lane[5]) + (lane[6] + lane[7])) + tail;
}

void RequireSameShape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     ShapeToString(a.shape()) + " vs " +
                     ShapeToString(b.shape()));
  }
}

void RequireRank(const Var& x, int rank, const char* op) {
  if (x.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " +
                     ShapeToString(x.shape()));
  }
}

// Positions per channel for a channel-first tensor.
int64_t Positions(const Tensor& t) { return t.size() / t.dim(0); }

template <typename Fwd, typename Deriv>
Var UnaryElementwise(const Var& x, Fwd f, Deriv df) {
  const Tensor& xv = x.value();
  Tensor out = Tensor::Uninitialized(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return MakeResult(std::move(out), {x}, [df](Node& n) {
    const Tensor& xin = ValueOf(n, 0);
    Tensor& gx = GradOf(n, 0);
    for (int64_t i = 0; i < xin.size(); ++i) {
      gx[i] += n.grad[i] * df(xin[i], n.value[i]);
    }
  });
}

}  // namespace

Var Add(const Var& a, const Var& b) {
  RequireSameShape(a, b, "Add");
  Tensor out = a.value();
  AddInPlace(out, b.value());
  return MakeResult(std::move(out), {a, b}, [](Node& n) {
    if (Needs(n, 0)) AddInPlace(GradOf(n, 0), n.grad);
    if (Needs(n, 1)) AddInPlace(GradOf(n, 1), n.grad);
  });
}

Var Sub(const Var& a, const Var& b) {
  RequireSameShape(a, b, "Sub");
  Tensor out = a.value();
  AddInPlace(out, b.value(), -1.0);
  return MakeResult(std::move(out), {a, b}, [](Node& n) {
    if (Needs(n, 0)) AddInPlace(GradOf(n, 0), n.grad);
    if (Needs(n, 1)) AddInPlace(GradOf(n, 1), n.grad, -1.0);
  });
}

Var Mul(const Var& a, const Var& b) {
  RequireSameShape(a, b, "Mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = Tensor::Uninitialized(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return MakeResult(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = ValueOf(n, 0);
    const Tensor& bv = ValueOf(n, 1);
    if (Needs(n, 0)) {
      Tensor& g = GradOf(n, 0);
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (Needs(n, 1)) {
      Tensor& g = GradOf(n, 1);
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

Var Scale(const Var& x, double s) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= s;
  return MakeResult(std::move(out), {x},
                    [s](Node& n) { AddInPlace(GradOf(n, 0), n.grad, s); });
}

Var AddScalar(const Var& x, double s) {
  Tensor out = x.value();
  for (double& v : out.values()) v += s;
  return MakeResult(std::move(out), {x},
                    [](Node& n) { AddInPlace(GradOf(n, 0), n.grad); });
}

Var LeakyRelu(const Var& x, double negative_slope) {
  return UnaryElementwise(
      x, [negative_slope](double v) { return v >= 0 ? v : negative_slope * v; },
      [negative_slope](double v, double) {
        return v >= 0 ? 1.0 : negative_slope;
      });
}

Var Sigmoid(const Var& x) {
  return UnaryElementwise(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var Gelu(const Var& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return UnaryElementwise(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
               v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Var AddPerChannel(const Var& x, const Var& v) {
  const Tensor& xv = x.value();
  if (v.value().size() != xv.dim(0)) {
    throw ShapeError("AddPerChannel: " + ShapeToString(v.shape()) +
                     " does not broadcast over " + ShapeToString(x.shape()));
  }
  const int64_t p = Positions(xv);
  Tensor out = xv;
  for (int c = 0; c < xv.dim(0); ++c) {
    const double b = v.value()[c];
    double* o = out.data() + c * p;
    for (int64_t i = 0; i < p; ++i) o[i] += b;
  }
  return MakeResult(std::move(out), {x, v}, [p](Node& n) {
    if (Needs(n, 0)) AddInPlace(GradOf(n, 0), n.grad);
    if (Needs(n, 1)) {
      Tensor& gv = GradOf(n, 1);
      for (int c = 0; c < gv.size(); ++c) {
        gv[c] += SumLanes(n.grad.data() + c * p, p);
      }
    }
  });
}

Var MulPerChannel(const Var& x, const Var& v) {
  const Tensor& xv = x.value();
  if (v.value().size() != xv.dim(0)) {
    throw ShapeError("MulPerChannel: " + ShapeToString(v.shape()) +
                     " does not broadcast over " + ShapeToString(x.shape()));
  }
  const int64_t p = Positions(xv);
  Tensor out = xv;
  for (int c = 0; c < xv.dim(0); ++c) {
    const double s = v.value()[c];
    double* o = out.data() + c * p;
    for (int64_t i = 0; i < p; ++i) o[i] *= s;
  }
  return MakeResult(std::move(out), {x, v}, [p](Node& n) {
    const Tensor& xv = ValueOf(n, 0);
    const Tensor& vv = ValueOf(n, 1);
    const int channels = static_cast<int>(vv.size());
    if (Needs(n, 0)) {
      Tensor& gx = GradOf(n, 0);
      for (int c = 0; c < channels; ++c) {
        for (int64_t i = 0; i < p; ++i) {
          gx[c * p + i] += n.grad[c * p + i] * vv[c];
        }
      }
    }
    if (Needs(n, 1)) {
      Tensor& gv = GradOf(n, 1);
      for (int c = 0; c < channels; ++c) {
        gv[c] += Dot(n.grad.data() + c * p, xv.data() + c * p, p);
      }
    }
  });
}

Var MulByScalarVar(const Var& x, const Var& s) {
  if (s.value().size() != 1) {
    throw ShapeError("MulByScalarVar: scale must have one element, got " +
                     ShapeToString(s.shape()));
  }
  Tensor out = x.value();
  const double sv = s.value()[0];
  for (double& v : out.values()) v *= sv;
  return MakeResult(std::move(out), {x, s}, [](Node& n) {
    const double sv = ValueOf(n, 1)[0];
    if (Needs(n, 0)) AddInPlace(GradOf(n, 0), n.grad, sv);
    if (Needs(n, 1)) {
      const Tensor& xv = ValueOf(n, 0);
      double acc = 0.0;
      for (int64_t i = 0; i < xv.size(); ++i) acc += n.grad[i] * xv[i];
      GradOf(n, 1)[0] += acc;
    }
  });
}

Var Sum(const Var& x) {
  return MakeResult(Tensor::Scalar(x.value().Sum()), {x}, [](Node& n) {
    const double g = n.grad[0];
    for (double& v : GradOf(n, 0).values()) v += g;
  });
}

Var Mean(const Var& x) {
  const double count = static_cast<double>(x.value().size());
  return MakeResult(Tensor::Scalar(x.value().Sum() / count), {x},
                    [count](Node& n) {
                      const double g = n.grad[0] / count;
                      for (double& v : GradOf(n, 0).values()) v += g;
                    });
}

Var L1Loss(const Var& a, const Var& b) {
  RequireSameShape(a, b, "L1Loss");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double s = 0.0;
  for (int64_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
  const double count = static_cast<double>(av.size());
  return MakeResult(Tensor::Scalar(s / count), {a, b}, [count](Node& n) {
    const Tensor& av = ValueOf(n, 0);
    const Tensor& bv = ValueOf(n, 1);
    const double g = n.grad[0] / count;
    for (int64_t i = 0; i < av.size(); ++i) {
      const double d = av[i] - bv[i];
      const double sg = d > 0 ? g : (d < 0 ? -g : 0.0);
      if (Needs(n, 0)) GradOf(n, 0)[i] += sg;
      if (Needs(n, 1)) GradOf(n, 1)[i] -= sg;
    }
  });
}

Var SumSquaredError(const Var& a, const Var& b) {
  RequireSameShape(a, b, "SumSquaredError");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double s = 0.0;
  for (int64_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  return MakeResult(Tensor::Scalar(s), {a, b}, [](Node& n) {
    const Tensor& av = ValueOf(n, 0);
    const Tensor& bv = ValueOf(n, 1);
    const double g = 2.0 * n.grad[0];
    for (int64_t i = 0; i < av.size(); ++i) {
      const double d = g * (av[i] - bv[i]);
      if (Needs(n, 0)) GradOf(n, 0)[i] += d;
      if (Needs(n, 1)) GradOf(n, 1)[i] -= d;
    }
  });
}

Var WeightedSum(const Var& x, const Tensor& weights) {
  if (weights.size() != x.value().size()) {
    throw ShapeError("WeightedSum: weight count mismatch");
  }
  double s = 0.0;
  for (int64_t i = 0; i < weights.size(); ++i) s += weights[i] * x.value()[i];
  return MakeResult(Tensor::Scalar(s), {x}, [weights](Node& n) {
    AddInPlace(GradOf(n, 0), weights, n.grad[0]);
  });
}

Var Reshape(const Var& x, Shape shape) {
  Tensor out = x.value().Reshaped(std::move(shape));
  return MakeResult(std::move(out), {x}, [](Node& n) {
    Tensor& g = GradOf(n, 0);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

Var Concat(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("Concat: no inputs");
  Shape shape = xs[0].shape();
  int lead = 0;
  for (const Var& x : xs) {
    Shape s = x.shape();
    if (s.size() != shape.size() ||
        !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw ShapeError("Concat: trailing shapes differ: " + ShapeToString(s) +
                       " vs " + ShapeToString(shape));
    }
    lead += s[0];
  }
  shape[0] = lead;
  Tensor out = Tensor::Uninitialized(shape);
  std::vector<int64_t> offsets;
  int64_t off = 0;
  for (const Var& x : xs) {
    offsets.push_back(off);
    std::copy(x.value().data(), x.value().data() + x.value().size(),
              out.data() + off);
    off += x.value().size();
  }
  return MakeResult(std::move(out), xs, [offsets](Node& n) {
    for (size_t k = 0; k < n.inputs.size(); ++k) {
      if (!Needs(n, k)) continue;
      Tensor& g = GradOf(n, k);
      const double* src = n.grad.data() + offsets[k];
      for (int64_t i = 0; i < g.size(); ++i) g[i] += src[i];
    }
  });
}

Var Slice(const Var& x, int begin, int count) {
  const Tensor& xv = x.value();
  if (begin < 0 || count < 0 || begin + count > xv.dim(0)) {
    throw ShapeError("Slice [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " +
                     ShapeToString(x.shape()));
  }
  Shape shape = xv.shape();
  shape[0] = count;
  const int64_t inner = Positions(xv);
  Tensor out = Tensor::Uninitialized(shape);
  std::copy(xv.data() + begin * inner, xv.data() + (begin + count) * inner,
            out.data());
  return MakeResult(std::move(out), {x}, [begin, inner](Node& n) {
    Tensor& g = GradOf(n, 0);
    double* dst = g.data() + begin * inner;
    for (int64_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
  });
}

Var PixelShuffle(const Var& x, int r) {
  RequireRank(x, 3, "PixelShuffle");
  const Tensor& xv = x.value();
  if (r < 1 || xv.dim(0) % (r * r) != 0) {
    throw ShapeError("PixelShuffle: channels " + std::to_string(xv.dim(0)) +
                     " not divisible by r^2 = " + std::to_string(r * r));
  }
  const int c_out = xv.dim(0) / (r * r);
  const int h = xv.dim(1);
  const int w = xv.dim(2);
  Tensor out = Tensor::Uninitialized(Shape{c_out, h * r, w * r});
  // out[c, y*r+i, x*r+j] = in[c*r*r + i*r + j, y, x]
  std::vector<int64_t> index(out.size());
  for (int c = 0; c < c_out; ++c)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            const int64_t src =
                ((static_cast<int64_t>(c) * r * r + i * r + j) * h + y) * w + xx;
            const int64_t dst =
                (static_cast<int64_t>(c) * h * r + y * r + i) * (w * r) +
                xx * r + j;
            index[dst] = src;
            out[dst] = xv[src];
          }
  return MakeResult(std::move(out), {x}, [index](Node& n) {
    Tensor& g = GradOf(n, 0);
    for (size_t d = 0; d < index.size(); ++d) g[index[d]] += n.grad[d];
  });
}

Var PixelUnshuffle(const Var& x, int r) {
  RequireRank(x, 3, "PixelUnshuffle");
  const Tensor& xv = x.value();
  if (r < 1 || xv.dim(1) % r != 0 || xv.dim(2) % r != 0) {
    throw ShapeError("PixelUnshuffle: spatial size " +
                     ShapeToString(x.shape()) + " not divisible by " +
                     std::to_string(r));
  }
  const int c_in = xv.dim(0);
  const int h = xv.dim(1) / r;
  const int w = xv.dim(2) / r;
  Tensor out = Tensor::Uninitialized(Shape{c_in * r * r, h, w});
  std::vector<int64_t> index(out.size());
  for (int c = 0; c < c_in; ++c)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            const int64_t dst =
                ((static_cast<int64_t>(c) * r * r + i * r + j) * h + y) * w + xx;
            const int64_t src =
                (static_cast<int64_t>(c) * h * r + y * r + i) * (w * r) +
                xx * r + j;
            index[dst] = src;
            out[dst] = xv[src];
          }
  return MakeResult(std::move(out), {x}, [index](Node& n) {
    Tensor& g = GradOf(n, 0);
    for (size_t d = 0; d < index.size(); ++d) g[index[d]] += n.grad[d];
  });
}

namespace {

// Source taps for half-pixel-centred linear resampling along one axis.
struct Taps {
  std::vector<int> lo, hi;
  std::vector<double> w_hi;
};

Taps LinearTaps(int in, int out) {
  Taps t;
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const int hi = std::min(lo + 1, in - 1);
    t.lo.push_back(lo);
    t.hi.push_back(hi);
    t.w_hi.push_back(src - lo);
  }
  return t;
}

}  // namespace

Var ResizeBilinear(const Var& x, int out_h, int out_w) {
  RequireRank(x, 3, "ResizeBilinear");
  const Tensor& xv = x.value();
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (out_h == h && out_w == w) return x;
  if (out_h < 1 || out_w < 1) throw ShapeError("ResizeBilinear: empty output");
  Taps ty = LinearTaps(h, out_h);
  Taps tx = LinearTaps(w, out_w);
  Tensor out = Tensor::Uninitialized(Shape{c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < out_h; ++y)
      for (int xx = 0; xx < out_w; ++xx) {
        const double wy = ty.w_hi[y], wx = tx.w_hi[xx];
        out.at(ch, y, xx) = (1 - wy) * ((1 - wx) * xv.at(ch, ty.lo[y], tx.lo[xx]) +
                                        wx * xv.at(ch, ty.lo[y], tx.hi[xx])) +
                            wy * ((1 - wx) * xv.at(ch, ty.hi[y], tx.lo[xx]) +
                                  wx * xv.at(ch, ty.hi[y], tx.hi[xx]));
      }
  return MakeResult(std::move(out), {x}, [ty, tx](Node& n) {
    Tensor& g = GradOf(n, 0);
    const int c = n.grad.dim(0), oh = n.grad.dim(1), ow = n.grad.dim(2);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          const double go = n.grad.at(ch, y, xx);
          const double wy = ty.w_hi[y], wx = tx.w_hi[xx];
          g.at(ch, ty.lo[y], tx.lo[xx]) += go * (1 - wy) * (1 - wx);
          g.at(ch, ty.lo[y], tx.hi[xx]) += go * (1 - wy) * wx;
          g.at(ch, ty.hi[y], tx.lo[xx]) += go * wy * (1 - wx);
          g.at(ch, ty.hi[y], tx.hi[xx]) += go * wy * wx;
        }
  });
}

Var AdaptiveAvgPool(const Var& x, int out_h, int out_w) {
  RequireRank(x, 3, "AdaptiveAvgPool");
  const Tensor& xv = x.value();
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (out_h < 1 || out_w < 1) throw ShapeError("AdaptiveAvgPool: empty output");
  // Bin i covers [floor(i*h/oh), ceil((i+1)*h/oh)).
  auto bins = [](int in, int out) {
    std::vector<std::pair<int, int>> b;
    for (int i = 0; i < out; ++i) {
      const int s = (i * in) / out;
      const int e = ((i + 1) * in + out - 1) / out;
      b.emplace_back(s, e);
    }
    return b;
  };
  auto by = bins(h, out_h);
  auto bx = bins(w, out_w);
  Tensor out = Tensor::Uninitialized(Shape{c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < out_h; ++i)
      for (int j = 0; j < out_w; ++j) {
        double s = 0.0;
        for (int y = by[i].first; y < by[i].second; ++y)
          for (int xx = bx[j].first; xx < bx[j].second; ++xx)
            s += xv.at(ch, y, xx);
        const int count = (by[i].second - by[i].first) *
                          (bx[j].second - bx[j].first);
        out.at(ch, i, j) = s / count;
      }
  return MakeResult(std::move(out), {x}, [by, bx](Node& n) {
    Tensor& g = GradOf(n, 0);
    const int c = n.grad.dim(0);
    for (int ch = 0; ch < c; ++ch)
      for (size_t i = 0; i < by.size(); ++i)
        for (size_t j = 0; j < bx.size(); ++j) {
          const int count = (by[i].second - by[i].first) *
                            (bx[j].second - bx[j].first);
          const double go = n.grad.at(ch, i, j) / count;
          for (int y = by[i].first; y < by[i].second; ++y)
            for (int xx = bx[j].first; xx < bx[j].second; ++xx)
              g.at(ch, y, xx) += go;
        }
  });
}

Var GlobalAvgPool(const Var& x) {
  const Tensor& xv = x.value();
  const int c = xv.dim(0);
  const int64_t p = Positions(xv);
  Tensor out(Shape{c});
  for (int ch = 0; ch < c; ++ch) {
    out[ch] = SumLanes(xv.data() + ch * p, p) / static_cast<double>(p);
  }
  return MakeResult(std::move(out), {x}, [p](Node& n) {
    Tensor& g = GradOf(n, 0);
    for (int ch = 0; ch < n.grad.size(); ++ch) {
      const double go = n.grad[ch] / static_cast<double>(p);
      for (int64_t i = 0; i < p; ++i) g[ch * p + i] += go;
    }
  });
}

Var GlobalMaxPool(const Var& x) {
  const Tensor& xv = x.value();
  const int c = xv.dim(0);
  const int64_t p = Positions(xv);
  Tensor out(Shape{c});
  std::vector<int64_t> argmax(c);
  for (int ch = 0; ch < c; ++ch) {
    int64_t best = ch * p;
    for (int64_t i = 1; i < p; ++i) {
      if (xv[ch * p + i] > xv[best]) best = ch * p + i;
    }
    argmax[ch] = best;
    out[ch] = xv[best];
  }
  return MakeResult(std::move(out), {x}, [argmax](Node& n) {
    Tensor& g = GradOf(n, 0);
    for (size_t ch = 0; ch < argmax.size(); ++ch) g[argmax[ch]] += n.grad[ch];
  });
}

Var MatMul(const Var& a, const Var& b, bool transpose_a, bool transpose_b) {
  RequireRank(a, 2, "MatMul");
  RequireRank(b, 2, "MatMul");
  const int m = transpose_a ? a.dim(1) : a.dim(0);
  const int k = transpose_a ? a.dim(0) : a.dim(1);
  const int kb = transpose_b ? b.dim(1) : b.dim(0);
  const int nn = transpose_b ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw ShapeError("MatMul: inner dimensions differ for " +
                     ShapeToString(a.shape()) + (transpose_a ? "^T" : "") +
                     " x " + ShapeToString(b.shape()) +
                     (transpose_b ? "^T" : ""));
  }
  CMapM am(a.value().data(), a.dim(0), a.dim(1));
  CMapM bm(b.value().data(), b.dim(0), b.dim(1));
  Tensor out = Tensor::Uninitialized(Shape{m, nn});
  MapM om(out.data(), m, nn);
  if (!transpose_a && !transpose_b) om.noalias() = am * bm;
  else if (transpose_a && !transpose_b) om.noalias() = am.transpose() * bm;
  else if (!transpose_a && transpose_b) om.noalias() = am * bm.transpose();
  else om.noalias() = am.transpose() * bm.transpose();
  return MakeResult(std::move(out), {a, b}, [transpose_a, transpose_b](Node& n) {
    const Tensor& av = ValueOf(n, 0);
    const Tensor& bv = ValueOf(n, 1);
    CMapM am(av.data(), av.dim(0), av.dim(1));
    CMapM bm(bv.data(), bv.dim(0), bv.dim(1));
    CMapM gm(n.grad.data(), n.grad.dim(0), n.grad.dim(1));
    if (Needs(n, 0)) {
      Tensor& ga = GradOf(n, 0);
      MapM gam(ga.data(), ga.dim(0), ga.dim(1));
      // With A' = op(A), B' = op(B): dA' = dC B'^T.
      if (!transpose_a && !transpose_b) gam.noalias() += gm * bm.transpose();
      else if (!transpose_a && transpose_b) gam.noalias() += gm * bm;
      else if (transpose_a && !transpose_b) gam.noalias() += bm * gm.transpose();
      else gam.noalias() += bm.transpose() * gm.transpose();
    }
    if (Needs(n, 1)) {
      Tensor& gb = GradOf(n, 1);
      MapM gbm(gb.data(), gb.dim(0), gb.dim(1));
      // dB' = A'^T dC.
      if (!transpose_a && !transpose_b) gbm.noalias() += am.transpose() * gm;
      else if (transpose_a && !transpose_b) gbm.noalias() += am * gm;
      else if (!transpose_a && transpose_b) gbm.noalias() += gm.transpose() * am;
      else gbm.noalias() += gm.transpose() * am.transpose();
    }
  });
}

namespace {

struct ConvGeometry {
  int c_in, h, w, k, stride, pad, h_out, w_out;
};

// Output columns [lo, hi) of tap kx read inside the input row.
std::pair<int, int> ValidColumns(const ConvGeometry& g, int kx) {
  const int first = g.pad - kx;
  const int lo = first <= 0 ? 0 : (first + g.stride - 1) / g.stride;
  const int last = g.w - 1 + g.pad - kx;
  const int hi = last < 0 ? 0 : std::min(g.w_out, last / g.stride + 1);
  return {std::min(lo, hi), hi};
}

void Im2Col(const double* x, const ConvGeometry& g, double* cols) {
  const int64_t p_out = static_cast<int64_t>(g.h_out) * g.w_out;
  for (int c = 0; c < g.c_in; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((static_cast<int64_t>(c) * g.k + ky) * g.k + kx) * p_out;
        const auto [lo, hi] = ValidColumns(g, kx);
        const int shift = kx - g.pad;
        for (int oy = 0; oy < g.h_out; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + static_cast<int64_t>(oy) * g.w_out;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.w_out, 0.0);
            continue;
          }
          const double* src = x + (static_cast<int64_t>(c) * g.h + iy) * g.w;
          std::fill(dst, dst + lo, 0.0);
          if (g.stride == 1) {
            std::copy(src + lo + shift, src + hi + shift, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + shift];
          }
          std::fill(dst + hi, dst + g.w_out, 0.0);
        }
      }
}

void Col2Im(const double* cols, const ConvGeometry& g, double* x) {
  const int64_t p_out = static_cast<int64_t>(g.h_out) * g.w_out;
  for (int c = 0; c < g.c_in; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row =
            cols + ((static_cast<int64_t>(c) * g.k + ky) * g.k + kx) * p_out;
        const auto [lo, hi] = ValidColumns(g, kx);
        const int shift = kx - g.pad;
        for (int oy = 0; oy < g.h_out; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + static_cast<int64_t>(oy) * g.w_out;
          double* dst = x + (static_cast<int64_t>(c) * g.h + iy) * g.w;
          if (g.stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox + shift] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride + shift] += src[ox];
          }
        }
      }
}

}  // namespace

Var Conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int padding) {
  RequireRank(x, 3, "Conv2d");
  RequireRank(weight, 4, "Conv2d weight");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (wv.dim(1) != xv.dim(0) || wv.dim(2) != wv.dim(3)) {
    throw ShapeError("Conv2d: weight " + ShapeToString(weight.shape()) +
                     " incompatible with input " + ShapeToString(x.shape()));
  }
  if (bias.defined() && bias.value().size() != wv.dim(0)) {
    throw ShapeError("Conv2d: bias size mismatch");
  }
  ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(2), stride, padding,
                 0, 0};
  g.h_out = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.w_out = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  if (g.h_out < 1 || g.w_out < 1) {
    throw ShapeError("Conv2d: input " + ShapeToString(x.shape()) +
                     " too small for kernel");
  }
  const int c_out = wv.dim(0);
  const int64_t kk = static_cast<int64_t>(g.c_in) * g.k * g.k;
  const int64_t p_out = static_cast<int64_t>(g.h_out) * g.w_out;
  const bool pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;

  auto cols = std::make_shared<Tensor>();
  if (!pointwise) {
    *cols = Tensor::Uninitialized(
        Shape{static_cast<int>(kk), static_cast<int>(p_out)});
    Im2Col(xv.data(), g, cols->data());
  }
  const double* col_data = pointwise ? xv.data() : cols->data();

  Tensor out = Tensor::Uninitialized(Shape{c_out, g.h_out, g.w_out});
  MapM om(out.data(), c_out, p_out);
  CMapM wm(wv.data(), c_out, kk);
  CMapM cm(col_data, kk, p_out);
  om.noalias() = wm * cm;
  if (bias.defined()) {
    for (int o = 0; o < c_out; ++o) om.row(o).array() += bias.value()[o];
  }
  return MakeResult(
      std::move(out), {x, weight, bias},
      [g, cols, pointwise, c_out, kk, p_out](Node& n) {
        const double* col_data =
            pointwise ? ValueOf(n, 0).data() : cols->data();
        CMapM cm(col_data, kk, p_out);
        CMapM gm(n.grad.data(), c_out, p_out);
        const Tensor& wv = ValueOf(n, 1);
        CMapM wm(wv.data(), c_out, kk);
        if (Needs(n, 1)) {
          Tensor& gw = GradOf(n, 1);
          MapM gwm(gw.data(), c_out, kk);
          gwm.noalias() += gm * cm.transpose();
        }
        if (Needs(n, 2)) {
          Tensor& gb = GradOf(n, 2);
          for (int o = 0; o < c_out; ++o) gb[o] += gm.row(o).sum();
        }
        if (Needs(n, 0)) {
          Tensor& gx = GradOf(n, 0);
          if (pointwise) {
            MapM gxm(gx.data(), kk, p_out);
            gxm.noalias() += wm.transpose() * gm;
          } else {
            MatRM dcols(kk, p_out);
            dcols.noalias() = wm.transpose() * gm;
            Col2Im(dcols.data(), g, gx.data());
          }
        }
      });
}

namespace {

// Depthwise planes are handled in a zero-padded layout of row pitch wp, so
// every tap is one contiguous loop. Output column ox of row oy sits at
// oy * wp + ox; the pitch columns past w_out hold scratch values.
struct DepthwiseGeometry {
  int h, w, k, pad, h_out, w_out, hp, wp;
  int64_t span() const { return static_cast<int64_t>(h_out - 1) * wp + w_out; }
  int64_t offset(int ky, int kx) const {
    return static_cast<int64_t>(ky) * wp + kx;
  }
};

void PadPlane(const double* src, const DepthwiseGeometry& g, double* dst) {
  for (int y = 0; y < g.h; ++y) {
    std::copy(src + static_cast<int64_t>(y) * g.w,
              src + static_cast<int64_t>(y + 1) * g.w,
              dst + static_cast<int64_t>(y + g.pad) * g.wp + g.pad);
  }
}

}  // namespace

Var DepthwiseConv2d(const Var& x, const Var& weight, const Var& bias,
                    int padding) {
  RequireRank(x, 3, "DepthwiseConv2d");
  RequireRank(weight, 3, "DepthwiseConv2d weight");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (wv.dim(0) != xv.dim(0) || wv.dim(1) != wv.dim(2)) {
    throw ShapeError("DepthwiseConv2d: weight " + ShapeToString(weight.shape()) +
                     " incompatible with input " + ShapeToString(x.shape()));
  }
  const int c = xv.dim(0), k = wv.dim(1);
  DepthwiseGeometry g{xv.dim(1), xv.dim(2), k, padding, 0, 0, 0, 0};
  g.hp = g.h + 2 * padding;
  g.wp = g.w + 2 * padding;
  g.h_out = g.hp - k + 1;
  g.w_out = g.wp - k + 1;
  if (g.h_out < 1 || g.w_out < 1) {
    throw ShapeError("DepthwiseConv2d: input too small");
  }
  const int64_t plane = static_cast<int64_t>(g.h) * g.w;
  const int64_t plane_out = static_cast<int64_t>(g.h_out) * g.w_out;
  const int64_t span = g.span();
  Tensor out = Tensor::Uninitialized(Shape{c, g.h_out, g.w_out});
  std::vector<double> xp(static_cast<size_t>(g.hp) * g.wp, 0.0), acc(span);
  for (int ch = 0; ch < c; ++ch) {
    PadPlane(xv.data() + ch * plane, g, xp.data());
    std::fill(acc.begin(), acc.end(), bias.defined() ? bias.value()[ch] : 0.0);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double wk = wv[(static_cast<int64_t>(ch) * k + ky) * k + kx];
        const double* src = xp.data() + g.offset(ky, kx);
        for (int64_t i = 0; i < span; ++i) acc[i] += wk * src[i];
      }
    double* o = out.data() + ch * plane_out;
    for (int oy = 0; oy < g.h_out; ++oy) {
      std::copy_n(acc.data() + static_cast<int64_t>(oy) * g.wp, g.w_out,
                  o + static_cast<int64_t>(oy) * g.w_out);
    }
  }
  return MakeResult(std::move(out), {x, weight, bias}, [g, k](Node& n) {
    const Tensor& xv = ValueOf(n, 0);
    const Tensor& wv = ValueOf(n, 1);
    const int c = xv.dim(0);
    const int64_t plane = static_cast<int64_t>(g.h) * g.w;
    const int64_t plane_out = static_cast<int64_t>(g.h_out) * g.w_out;
    const int64_t span = g.span();
    const bool need_x = Needs(n, 0), need_w = Needs(n, 1), need_b = Needs(n, 2);
    Tensor* gx = need_x ? &GradOf(n, 0) : nullptr;
    Tensor* gw = need_w ? &GradOf(n, 1) : nullptr;
    Tensor* gb = need_b ? &GradOf(n, 2) : nullptr;
    const size_t padded = static_cast<size_t>(g.hp) * g.wp;
    std::vector<double> xp(need_w ? padded : 0, 0.0);
    std::vector<double> gxp(need_x ? padded : 0);
    std::vector<double> gp(span, 0.0);
    for (int ch = 0; ch < c; ++ch) {
      const double* grad = n.grad.data() + ch * plane_out;
      if (need_b) {
        (*gb)[ch] += SumLanes(grad, plane_out);
      }
      for (int oy = 0; oy < g.h_out; ++oy) {
        std::copy_n(grad + static_cast<int64_t>(oy) * g.w_out, g.w_out,
                    gp.data() + static_cast<int64_t>(oy) * g.wp);
      }
      if (need_w) PadPlane(xv.data() + ch * plane, g, xp.data());
      if (need_x) std::fill(gxp.begin(), gxp.end(), 0.0);
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const int64_t widx = (static_cast<int64_t>(ch) * k + ky) * k + kx;
          const int64_t off = g.offset(ky, kx);
          if (need_w) (*gw)[widx] += Dot(gp.data(), xp.data() + off, span);
          if (need_x) {
            const double wk = wv[widx];
            double* dst = gxp.data() + off;
            for (int64_t i = 0; i < span; ++i) dst[i] += wk * gp[i];
          }
        }
      if (need_x) {
        double* dst = gx->data() + ch * plane;
        for (int y = 0; y < g.h; ++y) {
          const double* src =
              gxp.data() + static_cast<int64_t>(y + g.pad) * g.wp + g.pad;
          for (int xx = 0; xx < g.w; ++xx) dst[y * g.w + xx] += src[xx];
        }
      }
    }
  });
}

Var LayerNormChannels(const Var& x, const Var& gamma, const Var& beta,
                      double eps) {
  const Tensor& xv = x.value();
  const int c = xv.dim(0);
  if (gamma.value().size() != c || beta.value().size() != c) {
    throw ShapeError("LayerNormChannels: affine size mismatch for " +
                     ShapeToString(x.shape()));
  }
  const int64_t p = Positions(xv);
  auto xhat = std::make_shared<Tensor>(Tensor::Uninitialized(xv.shape()));
  auto inv_std = std::make_shared<std::vector<double>>(p);
  Tensor out = Tensor::Uninitialized(xv.shape());
  std::vector<double> mean(p, 0.0), var(p, 0.0);
  for (int ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < p; ++i) mean[i] += xv[ch * p + i];
  for (int64_t i = 0; i < p; ++i) mean[i] /= c;
  for (int ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < p; ++i) {
      const double d = xv[ch * p + i] - mean[i];
      var[i] += d * d;
    }
  for (int64_t i = 0; i < p; ++i) (*inv_std)[i] = 1.0 / std::sqrt(var[i] / c + eps);
  for (int ch = 0; ch < c; ++ch) {
    const double gm = gamma.value()[ch], bt = beta.value()[ch];
    for (int64_t i = 0; i < p; ++i) {
      const double xh = (xv[ch * p + i] - mean[i]) * (*inv_std)[i];
      (*xhat)[ch * p + i] = xh;
      out[ch * p + i] = xh * gm + bt;
    }
  }
  return MakeResult(std::move(out), {x, gamma, beta},
                    [xhat, inv_std, c, p](Node& n) {
    const Tensor& gm = ValueOf(n, 1);
    if (Needs(n, 1)) {
      Tensor& gg = GradOf(n, 1);
      for (int ch = 0; ch < c; ++ch) {
        gg[ch] += Dot(n.grad.data() + ch * p, xhat->data() + ch * p, p);
      }
    }
    if (Needs(n, 2)) {
      Tensor& gb = GradOf(n, 2);
      for (int ch = 0; ch < c; ++ch) gb[ch] += SumLanes(n.grad.data() + ch * p, p);
    }
    if (Needs(n, 0)) {
      Tensor& gx = GradOf(n, 0);
      // dx = inv_std * (dxh - mean(dxh) - xhat * mean(dxh * xhat))
      std::vector<double> m1(p, 0.0), m2(p, 0.0);
      for (int ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < p; ++i) {
          const double dxh = n.grad[ch * p + i] * gm[ch];
          m1[i] += dxh;
          m2[i] += dxh * (*xhat)[ch * p + i];
        }
      for (int64_t i = 0; i < p; ++i) {
        m1[i] /= c;
        m2[i] /= c;
      }
      for (int ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < p; ++i) {
          const double dxh = n.grad[ch * p + i] * gm[ch];
          gx[ch * p + i] +=
              (*inv_std)[i] * (dxh - m1[i] - (*xhat)[ch * p + i] * m2[i]);
        }
    }
  });
}

Var L2NormalizeRows(const Var& x, double eps) {
  RequireRank(x, 2, "L2NormalizeRows");
  const Tensor& xv = x.value();
  const int rows = xv.dim(0), cols = xv.dim(1);
  std::vector<double> norms(rows);
  Tensor out = Tensor::Uninitialized(xv.shape());
  for (int r = 0; r < rows; ++r) {
    const double* row = xv.data() + static_cast<int64_t>(r) * cols;
    norms[r] = std::max(std::sqrt(Dot(row, row, cols)), eps);
    for (int j = 0; j < cols; ++j) {
      out[static_cast<int64_t>(r) * cols + j] =
          xv[static_cast<int64_t>(r) * cols + j] / norms[r];
    }
  }
  return MakeResult(std::move(out), {x}, [norms, eps, rows, cols](Node& n) {
    Tensor& gx = GradOf(n, 0);
    for (int r = 0; r < rows; ++r) {
      const double* y = n.value.data() + static_cast<int64_t>(r) * cols;
      const double* g = n.grad.data() + static_cast<int64_t>(r) * cols;
      double* dx = gx.data() + static_cast<int64_t>(r) * cols;
      if (norms[r] <= eps) {
        for (int j = 0; j < cols; ++j) dx[j] += g[j] / norms[r];
        continue;
      }
      const double dot = Dot(g, y, cols);
      for (int j = 0; j < cols; ++j) dx[j] += (g[j] - y[j] * dot) / norms[r];
    }
  });
}

Var SoftmaxRows(const Var& x) {
  RequireRank(x, 2, "SoftmaxRows");
  const Tensor& xv = x.value();
  const int rows = xv.dim(0), cols = xv.dim(1);
  Tensor out = Tensor::Uninitialized(xv.shape());
  for (int r = 0; r < rows; ++r) {
    const double* in = xv.data() + static_cast<int64_t>(r) * cols;
    double* o = out.data() + static_cast<int64_t>(r) * cols;
    const double mx = *std::max_element(in, in + cols);
    double s = 0.0;
    for (int j = 0; j < cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      s += o[j];
    }
    for (int j = 0; j < cols; ++j) o[j] /= s;
  }
  return MakeResult(std::move(out), {x}, [rows, cols](Node& n) {
    Tensor& gx = GradOf(n, 0);
    for (int r = 0; r < rows; ++r) {
      const double* y = n.value.data() + static_cast<int64_t>(r) * cols;
      const double* g = n.grad.data() + static_cast<int64_t>(r) * cols;
      double* dx = gx.data() + static_cast<int64_t>(r) * cols;
      const double dot = Dot(g, y, cols);
      for (int j = 0; j < cols; ++j) dx[j] += y[j] * (g[j] - dot);
    }
  });
}

}  // namespace ldmric::ad
