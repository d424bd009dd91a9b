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

#ifndef LDMRIC_MEN_H_
#define LDMRIC_MEN_H_

#include <string>
#include <vector>

#include "ldmric/nn.h"

namespace ldmric {

// Pre-norm Transformer block: multi-head attention across channels followed
// by a gated feed-forward network with a depthwise 3x3 mixer. Both residual
// branches end in zero-initialized projections.
class TransformerBlock {
 public:
  TransformerBlock(ParameterSet& params, const std::string& name, int channels,
                   int heads, double ffn_expansion, Rng& rng);
  ad::Var operator()(const ad::Var& x) const;

 private:
  ad::Var Attention(const ad::Var& x) const;
  ad::Var FeedForward(const ad::Var& x) const;

  int channels_, heads_, hidden_;
  LayerNormLayer norm1_, norm2_;
  Conv2dLayer qkv_, proj_;
  std::vector<ad::Var> temperature_;
  Conv2dLayer ffn_in_, ffn_out_;
  DepthwiseConvLayer ffn_dw_;
};

// Lifts the {N, h, w} prior to `channels` maps through `stages` rounds of
// conv3x3 + pixel shuffle (x2 each); zero stages is a plain 3x3 projection.
class PriorUpsampler {
 public:
  PriorUpsampler(ParameterSet& params, const std::string& name,
                 int prior_channels, int channels, int stages, Rng& rng);
  ad::Var operator()(const ad::Var& prior) const;
  int stages() const { return stages_; }

 private:
  int stages_;
  std::vector<Conv2dLayer> convs_;
};

// Dynamic feature attention module.
//   Z = [UP(F), LN(M)]
//   M1 = fuse((sig(FCa(AP Z)) + sig(FCm(MP Z))) * Z) + M
//   M2 = GU(LN(M1) * LLs(AP F) + LLb(AP F)) + M1
// fuse and the gate output are zero-initialized, so the module starts as
// the identity on M.
class Dfam {
 public:
  Dfam(ParameterSet& params, const std::string& name, int channels,
       int prior_channels, int prior_stages, Rng& rng);
  // The upsampled prior must match M spatially unless `resize_prior` is
  // set, in which case it is resized bilinearly.
  ad::Var operator()(const ad::Var& m, const ad::Var& prior,
                     bool resize_prior = false) const;

  // Channel weights sig(FCa(AP z)) + sig(FCm(MP z)), shape {2C}.
  ad::Var ChannelAttention(const ad::Var& z) const;

 private:
  int channels_;
  PriorUpsampler up_;
  LayerNormLayer norm_m_, norm_fused_;
  LinearLayer fc_avg1_, fc_avg2_, fc_max1_, fc_max2_;
  Conv2dLayer fuse_;
  LinearLayer ll_scale_, ll_shift_;
  Conv2dLayer gate_in_, gate_out_;
};

struct MenConfig {
  std::vector<int> widths = {48, 96, 192};
  std::vector<int> blocks = {2, 2, 2};
  std::vector<int> heads = {1, 2, 4};
  double ffn_expansion = 2.0;
  int prior_stages = 3;  // K
  bool use_dfam = true;

  int scales() const { return static_cast<int>(widths.size()); }
  // Upsampling stages feeding the DFAM at `scale` (0 is full resolution).
  int StagesAt(int scale) const;
  void Validate() const;
};

// U-shaped multi-scale enhancement network. Returns decoded + residual.
class Men {
 public:
  Men(ParameterSet& params, const std::string& prefix, const MenConfig& config,
      int prior_channels, Rng& rng, int image_channels = 3);
  ad::Var operator()(const ad::Var& decoded, const ad::Var& prior) const;
  const MenConfig& config() const { return config_; }

 private:
  struct Level {
    std::vector<TransformerBlock> encoder, decoder;
    std::vector<Dfam> dfam;  // empty without DFAM
    Conv2dLayer down;        // to the next coarser level
    Conv2dLayer up;          // from the next coarser level
    Conv2dLayer reduce;      // after the skip concatenation
  };

  MenConfig config_;
  Conv2dLayer embed_, tail_;
  std::vector<Level> levels_;
};

}  // namespace ldmric

#endif  // LDMRIC_MEN_H_
