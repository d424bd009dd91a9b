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

#include "ldmric/lrm.h"

#include "ldmric/errors.h"
#include "ldmric/ops.h"

namespace ldmric {

void LrmConfig::Validate() const {
  if (pu_factor < 1) throw ConfigError("lrm.pu_factor must be >= 1");
  if (widths.empty()) throw ConfigError("lrm.widths must not be empty");
  for (int w : widths) {
    if (w < 1) throw ConfigError("lrm.widths entries must be positive");
  }
  if (latent_channels < 1 || latent_height < 1 || latent_width < 1) {
    throw ConfigError("lrm latent dimensions must be positive");
  }
  if (residual_blocks < 0) throw ConfigError("lrm.residual_blocks must be >= 0");
  if (!(negative_slope >= 0.0 && negative_slope < 1.0)) {
    throw ConfigError("lrm.negative_slope must lie in [0, 1)");
  }
}

Lrm::Lrm(ParameterSet& params, const std::string& prefix,
         const LrmConfig& config, int branches, Rng& rng, int image_channels)
    : config_(config),
      branches_(branches),
      image_channels_(image_channels),
      prefix_(prefix) {
  config_.Validate();
  if (branches != 1 && branches != 2) {
    throw ConfigError("LRM supports one or two input branches");
  }
  const int r = config_.pu_factor;
  int in = branches * image_channels * r * r;
  const int stages = static_cast<int>(config_.widths.size()) + 1;
  for (int s = 0; s < stages; ++s) {
    const bool last = s + 1 == stages;
    const int out = last ? config_.latent_channels : config_.widths[s];
    convs_.emplace_back(params, prefix + ".conv" + std::to_string(s), in, out, 3,
                        s == 0 ? 1 : 2, rng);
    std::vector<ResBlock> stack;
    if (!last) {
      for (int b = 0; b < config_.residual_blocks; ++b) {
        const std::string name =
            prefix + ".rb" + std::to_string(s) + "_" + std::to_string(b);
        stack.push_back({Conv2dLayer(params, name + ".a", out, out, 3, 1, rng),
                         Conv2dLayer(params, name + ".b", out, out, 3, 1, rng)});
      }
    }
    blocks_.push_back(std::move(stack));
    in = out;
  }
  const int n = config_.latent_channels;
  mix1_ = LinearLayer(params, prefix + ".mix1", n, n, rng);
  mix2_ = LinearLayer(params, prefix + ".mix2", n, n, rng);
}

ad::Var Lrm::Act(const ad::Var& x) const {
  return ad::LeakyRelu(x, config_.negative_slope);
}

ad::Var Lrm::Trunk(const ad::Var& unshuffled) const {
  ad::Var x = unshuffled;
  for (size_t s = 0; s < convs_.size(); ++s) {
    x = Act(convs_[s](x));
    for (const ResBlock& rb : blocks_[s]) {
      x = ad::Add(x, rb.b(Act(rb.a(x))));
    }
  }
  x = ad::AdaptiveAvgPool(x, config_.latent_height, config_.latent_width);
  return mix2_(Act(mix1_(x)));
}

ad::Var Lrm::operator()(const ad::Var& decoded, const ad::Var& original) const {
  if (branches_ != 2) throw ConfigError("single-branch LRM takes one image");
  if (decoded.shape() != original.shape()) {
    throw ShapeError("LRM inputs differ in shape: " +
                     ShapeToString(decoded.shape()) + " vs " +
                     ShapeToString(original.shape()));
  }
  const int r = config_.pu_factor;
  return Trunk(ad::Concat({ad::PixelUnshuffle(decoded, r),
                           ad::PixelUnshuffle(original, r)}));
}

ad::Var Lrm::operator()(const ad::Var& decoded) const {
  if (branches_ != 1) throw ConfigError("two-branch LRM needs both images");
  return Trunk(ad::PixelUnshuffle(decoded, config_.pu_factor));
}

void InitSingleBranchFromLrm(ParameterSet& dst, const std::string& dst_prefix,
                             const ParameterSet& src,
                             const std::string& src_prefix) {
  const std::string w0 = ".conv0.weight";
  dst.CopyValuesFrom(src, src_prefix, dst_prefix, {dst_prefix + w0});
  const Tensor& full = src.Get(src_prefix + w0).value();
  ad::Var target = dst.Get(dst_prefix + w0);
  const Shape& ts = target.shape();
  if (full.rank() != 4 || ts[0] != full.dim(0) || 2 * ts[1] != full.dim(1) ||
      ts[2] != full.dim(2) || ts[3] != full.dim(3)) {
    throw ConfigError("cannot slice " + ShapeToString(full.shape()) + " into " +
                      ShapeToString(ts));
  }
  const int64_t kk = static_cast<int64_t>(ts[2]) * ts[3];
  Tensor& out = target.mutable_value();
  for (int o = 0; o < ts[0]; ++o)
    for (int64_t i = 0; i < ts[1] * kk; ++i) {
      out[o * ts[1] * kk + i] = full[o * full.dim(1) * kk + i];
    }
}

}  // namespace ldmric
