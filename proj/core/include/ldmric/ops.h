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

#ifndef LDMRIC_OPS_H_
#define LDMRIC_OPS_H_

#include <vector>

#include "ldmric/autograd.h"

// Differentiable tensor operations. Feature maps are channel-first {C, H, W};
// token matrices are {C, L}. Shape violations throw ShapeError.
namespace ldmric::ad {

// Elementwise, equal shapes.
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Scale(const Var& x, double s);
Var AddScalar(const Var& x, double s);

Var LeakyRelu(const Var& x, double negative_slope);
Var Sigmoid(const Var& x);
Var Gelu(const Var& x);

// x is {C, ...}; v is {C}. Broadcast over all trailing positions.
Var AddPerChannel(const Var& x, const Var& v);
Var MulPerChannel(const Var& x, const Var& v);
// s is a one-element tensor.
Var MulByScalarVar(const Var& x, const Var& s);

// Reductions to a one-element tensor.
Var Sum(const Var& x);
Var Mean(const Var& x);
Var L1Loss(const Var& a, const Var& b);           // mean |a - b|
Var SumSquaredError(const Var& a, const Var& b);  // sum (a - b)^2
Var WeightedSum(const Var& x, const Tensor& weights);

Var Reshape(const Var& x, Shape shape);
// Concatenate / slice along the leading dimension.
Var Concat(const std::vector<Var>& xs);
Var Slice(const Var& x, int begin, int count);

Var PixelShuffle(const Var& x, int r);
Var PixelUnshuffle(const Var& x, int r);
Var ResizeBilinear(const Var& x, int out_h, int out_w);
Var AdaptiveAvgPool(const Var& x, int out_h, int out_w);
Var GlobalAvgPool(const Var& x);  // {C, H, W} -> {C}
Var GlobalMaxPool(const Var& x);  // {C, H, W} -> {C}

// 2-D matrix product op(a) * op(b).
Var MatMul(const Var& a, const Var& b, bool transpose_a = false,
           bool transpose_b = false);

// Dense convolution with zero padding. weight {Co, Ci, k, k}; bias {Co} or
// undefined.
Var Conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int padding);
// Per-channel 2-D convolution, stride 1. weight {C, k, k}; bias {C} or
// undefined.
Var DepthwiseConv2d(const Var& x, const Var& weight, const Var& bias,
                    int padding);

// Normalizes across the leading (channel) dimension at every position.
Var LayerNormChannels(const Var& x, const Var& gamma, const Var& beta,
                      double eps = 1e-5);
// Each row of a {R, P} matrix scaled to unit L2 norm.
Var L2NormalizeRows(const Var& x, double eps = 1e-12);
Var SoftmaxRows(const Var& x);

}  // namespace ldmric::ad

#endif  // LDMRIC_OPS_H_
