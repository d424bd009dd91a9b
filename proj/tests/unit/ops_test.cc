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

#include <gtest/gtest.h>

#include "gradcheck.h"
#include "ldmric/errors.h"
#include "ldmric/rng.h"

namespace ldmric::ad {
namespace {

using testing::GradCheck;

Var Rand(const Shape& s, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor t = rng.NormalTensor(s);
  for (double& v : t.storage()) v *= scale;
  return Var(std::move(t), true);
}

// Loss = <w, f(x)> with fixed random w so every output entry matters.
std::function<Var()> Probe(std::function<Var()> f, uint64_t seed = 99) {
  Var sample = f();
  Rng rng(seed);
  Tensor w = rng.NormalTensor(sample.shape());
  return [f, w] { return WeightedSum(f(), w); };
}

constexpr double kTol = 1e-6;

TEST(OpsGradTest, Elementwise) {
  Var a = Rand({3, 4, 5}, 1), b = Rand({3, 4, 5}, 2);
  EXPECT_LT(GradCheck(Probe([&] { return Mul(Add(a, b), Sub(a, b)); }), {a, b})
                .max_rel_error, kTol);
  EXPECT_LT(GradCheck(Probe([&] { return LeakyRelu(a, 0.2); }), {a}).max_rel_error,
            kTol);
  EXPECT_LT(GradCheck(Probe([&] { return Sigmoid(Gelu(a)); }), {a}).max_rel_error,
            kTol);
  EXPECT_LT(GradCheck(Probe([&] { return AddScalar(Scale(a, 3.0), 1.0); }), {a})
                .max_rel_error, kTol);
}

TEST(OpsGradTest, Broadcasts) {
  Var x = Rand({4, 3, 3}, 3), v = Rand({4}, 4), s = Rand({1}, 5);
  EXPECT_LT(GradCheck(Probe([&] {
              return MulByScalarVar(MulPerChannel(AddPerChannel(x, v), v), s);
            }), {x, v, s}).max_rel_error, kTol);
}

TEST(OpsGradTest, Losses) {
  Var a = Rand({2, 5}, 6), b = Rand({2, 5}, 7);
  // Keep |a - b| well away from the kink of the absolute value.
  for (int i = 0; i < 10; ++i) {
    b.mutable_value()[i] = a.value()[i] + (i % 2 ? 0.5 : -0.5) + 0.1 * i;
  }
  EXPECT_LT(GradCheck([&] { return L1Loss(a, b); }, {a, b}).max_rel_error, kTol);
  EXPECT_LT(GradCheck([&] { return SumSquaredError(a, b); }, {a, b}).max_rel_error,
            kTol);
  EXPECT_LT(GradCheck([&] { return Mean(Mul(a, a)); }, {a}).max_rel_error, kTol);
  EXPECT_NEAR(SumSquaredError(a, a).value()[0], 0.0, 0.0);
}

TEST(OpsGradTest, ShapeOps) {
  Var a = Rand({2, 4, 4}, 8), b = Rand({3, 4, 4}, 9);
  EXPECT_LT(GradCheck(Probe([&] {
              return Slice(Reshape(Concat({a, b}), {5, 16}), 1, 3);
            }), {a, b}).max_rel_error, kTol);
  EXPECT_LT(GradCheck(Probe([&] { return PixelShuffle(PixelUnshuffle(b, 2), 2); }),
                      {b}).max_rel_error, kTol);
}

TEST(OpsGradTest, Spatial) {
  Var x = Rand({2, 6, 5}, 10);
  EXPECT_LT(GradCheck(Probe([&] { return ResizeBilinear(x, 9, 4); }), {x})
                .max_rel_error, kTol);
  EXPECT_LT(GradCheck(Probe([&] { return AdaptiveAvgPool(x, 4, 4); }), {x})
                .max_rel_error, kTol);
  EXPECT_LT(GradCheck(Probe([&] { return GlobalAvgPool(x); }), {x}).max_rel_error,
            kTol);
  EXPECT_LT(GradCheck(Probe([&] { return GlobalMaxPool(x); }), {x}).max_rel_error,
            kTol);
}

TEST(OpsGradTest, MatMulAllTransposes) {
  Var a = Rand({3, 4}, 11), b = Rand({4, 5}, 12);
  Var at = Rand({4, 3}, 13), bt = Rand({5, 4}, 14);
  EXPECT_LT(GradCheck(Probe([&] { return MatMul(a, b); }), {a, b}).max_rel_error,
            kTol);
  EXPECT_LT(GradCheck(Probe([&] { return MatMul(at, b, true, false); }), {at, b})
                .max_rel_error, kTol);
  EXPECT_LT(GradCheck(Probe([&] { return MatMul(a, bt, false, true); }), {a, bt})
                .max_rel_error, kTol);
  EXPECT_LT(GradCheck(Probe([&] { return MatMul(at, bt, true, true); }), {at, bt})
                .max_rel_error, kTol);
}

TEST(OpsGradTest, Convolutions) {
  Var x = Rand({3, 7, 6}, 15);
  Var w3 = Rand({4, 3, 3, 3}, 16, 0.3), b = Rand({4}, 17);
  Var w1 = Rand({4, 3, 1, 1}, 18);
  Var dw = Rand({3, 3, 3}, 19), db = Rand({3}, 20);
  EXPECT_LT(GradCheck(Probe([&] { return Conv2d(x, w3, b, 1, 1); }), {x, w3, b})
                .max_rel_error, kTol);
  EXPECT_LT(GradCheck(Probe([&] { return Conv2d(x, w3, b, 2, 1); }), {x, w3, b})
                .max_rel_error, kTol);
  EXPECT_LT(GradCheck(Probe([&] { return Conv2d(x, w1, Var(), 1, 0); }), {x, w1})
                .max_rel_error, kTol);
  EXPECT_LT(GradCheck(Probe([&] { return DepthwiseConv2d(x, dw, db, 1); }),
                      {x, dw, db}).max_rel_error, kTol);
  EXPECT_LT(GradCheck(Probe([&] { return DepthwiseConv2d(x, dw, db, 0); }),
                      {x, dw, db}).max_rel_error, kTol);
  Var dw5 = Rand({3, 5, 5}, 21, 0.3);
  EXPECT_LT(GradCheck(Probe([&] { return DepthwiseConv2d(x, dw5, Var(), 2); }),
                      {x, dw5}).max_rel_error, kTol);
}

TEST(OpsTest, DepthwiseMatchesDirectSum) {
  Var x = Rand({2, 5, 7}, 30), w = Rand({2, 3, 3}, 31), b = Rand({2}, 32);
  for (int pad : {0, 1, 2}) {
    const Tensor y = DepthwiseConv2d(x, w, b, pad).value();
    ASSERT_EQ(y.dim(1), 5 + 2 * pad - 2);
    ASSERT_EQ(y.dim(2), 7 + 2 * pad - 2);
    for (int c = 0; c < 2; ++c)
      for (int oy = 0; oy < y.dim(1); ++oy)
        for (int ox = 0; ox < y.dim(2); ++ox) {
          double s = b.value()[c];
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy + ky - pad, ix = ox + kx - pad;
              if (iy < 0 || iy >= 5 || ix < 0 || ix >= 7) continue;
              s += w.value()[(c * 3 + ky) * 3 + kx] * x.value().at(c, iy, ix);
            }
          EXPECT_NEAR(y.at(c, oy, ox), s, 1e-12) << pad;
        }
  }
}

TEST(OpsGradTest, Normalizations) {
  Var x = Rand({5, 3, 2}, 21), g = Rand({5}, 22), b = Rand({5}, 23);
  Var m = Rand({3, 7}, 24);
  EXPECT_LT(GradCheck(Probe([&] { return LayerNormChannels(x, g, b); }), {x, g, b})
                .max_rel_error, 1e-5);
  EXPECT_LT(GradCheck(Probe([&] { return L2NormalizeRows(m); }), {m}).max_rel_error,
            kTol);
  EXPECT_LT(GradCheck(Probe([&] { return SoftmaxRows(m); }), {m}).max_rel_error,
            kTol);
}

TEST(OpsTest, PixelShuffleLayout) {
  Tensor t(Shape{1, 4, 4});
  for (int i = 0; i < 16; ++i) t[i] = i;
  Var u = PixelUnshuffle(Var(t), 2);
  ASSERT_EQ(u.shape(), (Shape{4, 2, 2}));
  // Channel i*2+j holds pixels at offset (i, j) of each 2x2 cell.
  EXPECT_EQ(u.value().at(0, 0, 0), 0);
  EXPECT_EQ(u.value().at(1, 0, 0), 1);
  EXPECT_EQ(u.value().at(2, 0, 0), 4);
  EXPECT_EQ(u.value().at(3, 1, 1), 15);
  EXPECT_EQ(MaxAbsDiff(PixelShuffle(u, 2).value(), t), 0.0);
  EXPECT_EQ(MaxAbsDiff(PixelUnshuffle(Var(t), 1).value(), t), 0.0);
  EXPECT_THROW(PixelUnshuffle(Var(Tensor(Shape{1, 5, 4})), 2), ShapeError);
}

TEST(OpsTest, AdaptivePoolBins) {
  Tensor t(Shape{1, 1, 5});
  for (int i = 0; i < 5; ++i) t[i] = i;
  // Bins [0,2) [1,3) [2,4) [3,5) for 5 -> 4.
  Var p = AdaptiveAvgPool(Var(t), 1, 4);
  EXPECT_DOUBLE_EQ(p.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(p.value()[1], 1.5);
  EXPECT_DOUBLE_EQ(p.value()[3], 3.5);
}

TEST(OpsTest, ConvMatchesDirectSum) {
  struct Case { int k, stride, pad; };
  const int h = 6, w = 7;
  Var x = Rand({2, h, w}, 30), b = Rand({3}, 32);
  for (const Case& cs : {Case{3, 1, 1}, Case{3, 2, 1}, Case{3, 1, 0},
                         Case{5, 1, 2}, Case{5, 3, 2}, Case{4, 2, 3},
                         Case{3, 2, 0}, Case{1, 2, 0}}) {
    const int k = cs.k, st = cs.stride, pad = cs.pad;
    Var wt = Rand({3, 2, k, k}, 31 + k);
    const Tensor y = Conv2d(x, wt, b, st, pad).value();
    const int h_out = (h + 2 * pad - k) / st + 1, w_out = (w + 2 * pad - k) / st + 1;
    ASSERT_EQ(y.shape(), (Shape{3, h_out, w_out}));
    for (int o = 0; o < 3; ++o)
      for (int oy = 0; oy < h_out; ++oy)
        for (int ox = 0; ox < w_out; ++ox) {
          double s = b.value()[o];
          for (int c = 0; c < 2; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * st - pad + ky, ix = ox * st - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                s += wt.value()[((o * 2 + c) * k + ky) * k + kx] *
                     x.value().at(c, iy, ix);
              }
          EXPECT_NEAR(y.at(o, oy, ox), s, 1e-12)
              << "k " << k << " stride " << st << " pad " << pad;
        }
  }
}

TEST(OpsGradTest, ConvStridesAndPadding) {
  Var x = Rand({2, 6, 7}, 40);
  Var w5 = Rand({2, 2, 5, 5}, 41, 0.3), w4 = Rand({2, 2, 4, 4}, 42, 0.3);
  EXPECT_LT(GradCheck(Probe([&] { return Conv2d(x, w5, Var(), 3, 2); }), {x, w5})
                .max_rel_error, kTol);
  EXPECT_LT(GradCheck(Probe([&] { return Conv2d(x, w4, Var(), 2, 3); }), {x, w4})
                .max_rel_error, kTol);
}

TEST(OpsTest, NoGradGuardSkipsGraph) {
  Var a = Rand({2, 2}, 40);
  NoGradGuard guard;
  Var y = Mul(a, a);
  EXPECT_FALSE(y.requires_grad());
}

TEST(OpsTest, ShapeErrors) {
  EXPECT_THROW(Add(Var(Tensor(Shape{2})), Var(Tensor(Shape{3}))), ShapeError);
  EXPECT_THROW(MatMul(Var(Tensor(Shape{2, 3})), Var(Tensor(Shape{2, 3}))),
               ShapeError);
}

}  // namespace
}  // namespace ldmric::ad
