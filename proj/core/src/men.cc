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

#include "ldmric/men.h"

#include <algorithm>
#include <cmath>

#include "ldmric/errors.h"
#include "ldmric/ops.h"

namespace ldmric {

TransformerBlock::TransformerBlock(ParameterSet& params, const std::string& name,
                                   int channels, int heads, double ffn_expansion,
                                   Rng& rng)
    : channels_(channels), heads_(heads) {
  if (heads < 1 || channels % heads != 0) {
    throw ConfigError(name + ": " + std::to_string(heads) +
                      " heads do not divide " + std::to_string(channels) +
                      " channels");
  }
  hidden_ = std::max(1, static_cast<int>(std::lround(channels * ffn_expansion)));
  norm1_ = LayerNormLayer(params, name + ".norm1", channels);
  qkv_ = Conv2dLayer(params, name + ".attn.qkv", channels, 3 * channels, 1, 1, rng,
                     /*bias=*/false);
  for (int h = 0; h < heads; ++h) {
    temperature_.push_back(params.Add(
        name + ".attn.temperature" + std::to_string(h), Tensor({1}, 1.0)));
  }
  proj_ = Conv2dLayer(params, name + ".attn.proj", channels, channels, 1, 1, rng,
                      true, /*zero_init=*/true);
  norm2_ = LayerNormLayer(params, name + ".norm2", channels);
  ffn_in_ = Conv2dLayer(params, name + ".ffn.in", channels, 2 * hidden_, 1, 1, rng);
  ffn_dw_ = DepthwiseConvLayer(params, name + ".ffn.dw", 2 * hidden_, 3, rng);
  ffn_out_ = Conv2dLayer(params, name + ".ffn.out", hidden_, channels, 1, 1, rng,
                         true, /*zero_init=*/true);
}

ad::Var TransformerBlock::Attention(const ad::Var& x) const {
  const Shape shape = x.shape();
  const int hw = shape[1] * shape[2];
  const int ch = channels_ / heads_;
  ad::Var qkv = ad::Reshape(qkv_(norm1_(x)), {3 * channels_, hw});
  std::vector<ad::Var> outs;
  for (int h = 0; h < heads_; ++h) {
    ad::Var q = ad::L2NormalizeRows(ad::Slice(qkv, h * ch, ch));
    ad::Var k = ad::L2NormalizeRows(ad::Slice(qkv, channels_ + h * ch, ch));
    ad::Var v = ad::Slice(qkv, 2 * channels_ + h * ch, ch);
    ad::Var logits = ad::MulByScalarVar(ad::MatMul(q, k, false, true),
                                        temperature_[h]);
    outs.push_back(ad::MatMul(ad::SoftmaxRows(logits), v));
  }
  ad::Var merged = heads_ == 1 ? outs[0] : ad::Concat(outs);
  return proj_(ad::Reshape(merged, shape));
}

ad::Var TransformerBlock::FeedForward(const ad::Var& x) const {
  ad::Var h = ffn_dw_(ffn_in_(norm2_(x)));
  ad::Var gated = ad::Mul(ad::Gelu(ad::Slice(h, 0, hidden_)),
                          ad::Slice(h, hidden_, hidden_));
  return ffn_out_(gated);
}

ad::Var TransformerBlock::operator()(const ad::Var& x) const {
  if (x.shape().size() != 3 || x.dim(0) != channels_) {
    throw ShapeError("TransformerBlock expects {" + std::to_string(channels_) +
                     ", H, W}, got " + ShapeToString(x.shape()));
  }
  ad::Var y = ad::Add(x, Attention(x));
  return ad::Add(y, FeedForward(y));
}

PriorUpsampler::PriorUpsampler(ParameterSet& params, const std::string& name,
                               int prior_channels, int channels, int stages,
                               Rng& rng)
    : stages_(stages) {
  if (stages < 0) throw ConfigError(name + ": negative upsampling stages");
  if (stages == 0) {
    convs_.emplace_back(params, name + ".proj", prior_channels, channels, 3, 1,
                        rng);
  }
  int in = prior_channels;
  for (int s = 0; s < stages; ++s) {
    convs_.emplace_back(params, name + ".conv" + std::to_string(s), in,
                        4 * channels, 3, 1, rng);
    in = channels;
  }
}

ad::Var PriorUpsampler::operator()(const ad::Var& prior) const {
  if (stages_ == 0) return convs_[0](prior);
  ad::Var x = prior;
  for (const Conv2dLayer& conv : convs_) x = ad::PixelShuffle(conv(x), 2);
  return x;
}

Dfam::Dfam(ParameterSet& params, const std::string& name, int channels,
           int prior_channels, int prior_stages, Rng& rng)
    : channels_(channels),
      up_(params, name + ".up", prior_channels, channels, prior_stages, rng) {
  const int z = 2 * channels;
  const int squeeze = std::max(1, z / 4);
  norm_m_ = LayerNormLayer(params, name + ".norm_m", channels);
  fc_avg1_ = LinearLayer(params, name + ".fc_avg1", z, squeeze, rng);
  fc_avg2_ = LinearLayer(params, name + ".fc_avg2", squeeze, z, rng);
  fc_max1_ = LinearLayer(params, name + ".fc_max1", z, squeeze, rng);
  fc_max2_ = LinearLayer(params, name + ".fc_max2", squeeze, z, rng);
  fuse_ = Conv2dLayer(params, name + ".fuse", z, channels, 1, 1, rng, true,
                      /*zero_init=*/true);
  norm_fused_ = LayerNormLayer(params, name + ".norm_fused", channels);
  ll_scale_ = LinearLayer(params, name + ".ll_scale", prior_channels, channels, rng);
  ll_shift_ = LinearLayer(params, name + ".ll_shift", prior_channels, channels, rng);
  gate_in_ = Conv2dLayer(params, name + ".gate_in", channels, 2 * channels, 1, 1,
                         rng);
  gate_out_ = Conv2dLayer(params, name + ".gate_out", channels, channels, 1, 1, rng,
                          true, /*zero_init=*/true);
}

ad::Var Dfam::ChannelAttention(const ad::Var& z) const {
  ad::Var avg = fc_avg2_(ad::Gelu(fc_avg1_(ad::GlobalAvgPool(z))));
  ad::Var max = fc_max2_(ad::Gelu(fc_max1_(ad::GlobalMaxPool(z))));
  return ad::Add(ad::Sigmoid(avg), ad::Sigmoid(max));
}

ad::Var Dfam::operator()(const ad::Var& m, const ad::Var& prior,
                         bool resize_prior) const {
  if (m.shape().size() != 3 || m.dim(0) != channels_) {
    throw ShapeError("Dfam expects {" + std::to_string(channels_) +
                     ", H, W}, got " + ShapeToString(m.shape()));
  }
  ad::Var up = up_(prior);
  if (up.dim(1) != m.dim(1) || up.dim(2) != m.dim(2)) {
    if (!resize_prior) {
      throw ShapeError("upsampled prior " + ShapeToString(up.shape()) +
                       " does not match features " + ShapeToString(m.shape()));
    }
    up = ad::ResizeBilinear(up, m.dim(1), m.dim(2));
  }
  ad::Var z = ad::Concat({up, norm_m_(m)});
  ad::Var m1 = ad::Add(fuse_(ad::MulPerChannel(z, ChannelAttention(z))), m);
  ad::Var pooled = ad::GlobalAvgPool(prior);
  ad::Var y = ad::AddPerChannel(
      ad::MulPerChannel(norm_fused_(m1), ll_scale_(pooled)), ll_shift_(pooled));
  ad::Var g = gate_in_(y);
  ad::Var gated = ad::Mul(ad::Slice(g, 0, channels_),
                          ad::Sigmoid(ad::Slice(g, channels_, channels_)));
  return ad::Add(gate_out_(gated), m1);
}

int MenConfig::StagesAt(int scale) const {
  return std::max(0, prior_stages - scale);
}

void MenConfig::Validate() const {
  const size_t s = widths.size();
  if (s == 0) throw ConfigError("men.widths must not be empty");
  if (blocks.size() != s || heads.size() != s) {
    throw ConfigError("men.widths, men.blocks and men.heads must have equal length");
  }
  for (size_t i = 0; i < s; ++i) {
    if (widths[i] < 1) throw ConfigError("men.widths entries must be positive");
    if (blocks[i] < 0) throw ConfigError("men.blocks entries must be >= 0");
    if (heads[i] < 1 || widths[i] % heads[i] != 0) {
      throw ConfigError("men.heads[" + std::to_string(i) + "] = " +
                        std::to_string(heads[i]) + " does not divide width " +
                        std::to_string(widths[i]));
    }
  }
  if (!(ffn_expansion > 0.0)) throw ConfigError("men.ffn_expansion must be > 0");
  if (prior_stages < 0) throw ConfigError("men.prior_stages must be >= 0");
}

Men::Men(ParameterSet& params, const std::string& prefix,
         const MenConfig& config, int prior_channels, Rng& rng,
         int image_channels)
    : config_(config) {
  config_.Validate();
  const int scales = config_.scales();
  const auto& w = config_.widths;
  embed_ = Conv2dLayer(params, prefix + ".embed", image_channels, w[0], 3, 1, rng);
  levels_.resize(scales);
  for (int s = 0; s < scales; ++s) {
    Level& level = levels_[s];
    const std::string base = prefix + ".level" + std::to_string(s);
    const bool bottom = s + 1 == scales;
    auto make_blocks = [&](const std::string& tag) {
      std::vector<TransformerBlock> out;
      for (int b = 0; b < config_.blocks[s]; ++b) {
        out.emplace_back(params, base + "." + tag + std::to_string(b), w[s],
                         config_.heads[s], config_.ffn_expansion, rng);
      }
      return out;
    };
    if (!bottom) {
      level.encoder = make_blocks("enc");
      level.down = Conv2dLayer(params, base + ".down", w[s], w[s + 1], 3, 2, rng);
      level.up = Conv2dLayer(params, base + ".up", w[s + 1], 4 * w[s], 3, 1, rng);
      level.reduce = Conv2dLayer(params, base + ".reduce", 2 * w[s], w[s], 1, 1, rng);
    }
    if (config_.use_dfam) {
      level.dfam.emplace_back(params, base + ".dfam", w[s], prior_channels,
                              config_.StagesAt(s), rng);
    }
    level.decoder = make_blocks("dec");
  }
  tail_ = Conv2dLayer(params, prefix + ".tail", w[0], image_channels, 3, 1, rng,
                      true, /*zero_init=*/true);
}

ad::Var Men::operator()(const ad::Var& decoded, const ad::Var& prior) const {
  const int scales = config_.scales();
  const int factor = 1 << (scales - 1);
  if (decoded.shape().size() != 3 || decoded.dim(1) % factor != 0 ||
      decoded.dim(2) % factor != 0) {
    throw ShapeError("MEN input " + ShapeToString(decoded.shape()) +
                     " must have H and W divisible by " + std::to_string(factor));
  }
  std::vector<ad::Var> skips(scales);
  ad::Var x = embed_(decoded);
  for (int s = 0; s + 1 < scales; ++s) {
    for (const TransformerBlock& tb : levels_[s].encoder) x = tb(x);
    skips[s] = x;
    x = levels_[s].down(x);
  }
  for (int s = scales - 1; s >= 0; --s) {
    const Level& level = levels_[s];
    if (s + 1 < scales) {
      x = ad::PixelShuffle(level.up(x), 2);
      x = level.reduce(ad::Concat({x, skips[s]}));
    }
    if (!level.dfam.empty()) x = level.dfam[0](x, prior, /*resize_prior=*/true);
    for (const TransformerBlock& tb : level.decoder) x = tb(x);
  }
  return ad::Add(decoded, tail_(x));
}

}  // namespace ldmric
