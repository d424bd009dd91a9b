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

#include "ldmric/ldm.h"

#include <algorithm>
#include <cmath>

#include "ldmric/ops.h"

namespace ldmric {
namespace {

constexpr double kFirstGammaBar = 0.64;
constexpr double kLastGammaBar = 0.01;

}  // namespace

NoiseSchedule NoiseSchedule::Build(int steps) {
  if (steps < 1) {
    throw ConfigError("diffusion steps must be >= 1, got " + std::to_string(steps));
  }
  std::vector<double> eta(steps);
  if (steps == 1) {
    eta[0] = 1.0 - kLastGammaBar;
  } else {
    double prev = 1.0;
    for (int t = 1; t <= steps; ++t) {
      const double frac = static_cast<double>(t - 1) / (steps - 1);
      const double gb =
          kFirstGammaBar * std::pow(kLastGammaBar / kFirstGammaBar, frac);
      eta[t - 1] = 1.0 - gb / prev;
      prev = gb;
    }
  }
  // Rounding may leave the running product a hair above the endpoint.
  for (;;) {
    double gb = 1.0;
    for (double e : eta) gb *= 1.0 - e;
    if (gb <= kLastGammaBar) break;
    eta.back() = std::nextafter(eta.back(), 1.0);
  }
  return FromEta(std::move(eta));
}

NoiseSchedule NoiseSchedule::FromEta(std::vector<double> eta) {
  if (eta.empty()) throw ConfigError("noise schedule must have at least one step");
  NoiseSchedule s;
  double gb = 1.0;
  for (size_t i = 0; i < eta.size(); ++i) {
    if (!(eta[i] > 0.0 && eta[i] < 1.0)) {
      throw ConfigError("eta_" + std::to_string(i + 1) + " must lie in (0, 1)");
    }
    const double g = 1.0 - eta[i];
    gb *= g;
    s.gamma_.push_back(g);
    s.gamma_bar_.push_back(gb);
  }
  if (gb > kLastGammaBar) {
    throw ConfigError("final cumulative gamma must be <= 0.01 so F_T is noise");
  }
  s.eta_ = std::move(eta);
  return s;
}

size_t NoiseSchedule::Index(int t) const {
  if (t < 1 || t > steps()) {
    throw RangeError("diffusion step " + std::to_string(t) + " outside [1, " +
                     std::to_string(steps()) + "]");
  }
  return static_cast<size_t>(t - 1);
}

Tensor ForwardDiffuse(const Tensor& f0, int t, const Tensor& eps,
                      const NoiseSchedule& schedule) {
  if (!f0.SameShape(eps)) {
    throw ShapeError("noise shape " + ShapeToString(eps.shape()) +
                     " differs from latent " + ShapeToString(f0.shape()));
  }
  Tensor out(f0.shape());
  ForwardDiffuseKernel(f0.data(), eps.data(), out.data(), f0.size(),
                       schedule.gamma_bar(t));
  return out;
}

ad::Var ForwardDiffuse(const ad::Var& f0, int t, const Tensor& eps,
                       const NoiseSchedule& schedule) {
  const double gb = schedule.gamma_bar(t);
  return ad::Add(ad::Scale(f0, std::sqrt(gb)),
                 ad::Var(ForwardDiffuse(Tensor(f0.shape(), 0.0), t, eps, schedule)));
}

ad::Var ReverseStep(const ad::Var& ft, const ad::Var& eps_hat, int t,
                    const NoiseSchedule& schedule, const Tensor& noise) {
  const double g = schedule.gamma(t);
  const double gb = schedule.gamma_bar(t);
  if (ft.shape() != eps_hat.shape()) {
    throw ShapeError("noise prediction shape " + ShapeToString(eps_hat.shape()) +
                     " differs from latent " + ShapeToString(ft.shape()));
  }
  ad::Var mean = ad::Scale(
      ad::Sub(ft, ad::Scale(eps_hat, (1.0 - g) / std::sqrt(1.0 - gb))),
      1.0 / std::sqrt(g));
  if (noise.empty()) return mean;
  if (t == 1 && noise.MaxAbs() != 0.0) {
    throw RangeError("the final reverse step takes no noise");
  }
  if (!noise.SameShape(ft.value())) {
    throw ShapeError("reverse-step noise shape mismatch");
  }
  Tensor scaled = noise;
  for (double& v : scaled.storage()) v *= std::sqrt(1.0 - g);
  return ad::Add(mean, ad::Var(std::move(scaled)));
}

void DenoiserConfig::Validate() const {
  if (hidden < 1 || blocks < 0 || time_dim < 2 || time_dim % 2 != 0) {
    throw ConfigError("ldm.denoiser needs hidden >= 1, blocks >= 0 and an even "
                      "time_dim >= 2");
  }
  if (heads < 1 || hidden % heads != 0) {
    throw ConfigError("ldm.denoiser.heads = " + std::to_string(heads) +
                      " does not divide hidden = " + std::to_string(hidden));
  }
}

Denoiser::Denoiser(ParameterSet& params, const std::string& prefix,
                   const DenoiserConfig& config, int latent_channels, Rng& rng)
    : config_(config), latent_channels_(latent_channels) {
  config_.Validate();
  const int h = config_.hidden;
  in_proj_ = LinearLayer(params, prefix + ".in_proj", 2 * latent_channels, h, rng);
  time1_ = LinearLayer(params, prefix + ".time1", config_.time_dim, h, rng);
  time2_ = LinearLayer(params, prefix + ".time2", h, h, rng);
  for (int b = 0; b < config_.blocks; ++b) {
    const std::string name = prefix + ".block" + std::to_string(b);
    blocks_.push_back(
        {LayerNormLayer(params, name + ".norm1", h),
         LayerNormLayer(params, name + ".norm2", h),
         LinearLayer(params, name + ".qkv", h, 3 * h, rng),
         LinearLayer(params, name + ".proj", h, h, rng, true, /*zero_init=*/true),
         LinearLayer(params, name + ".mlp_in", h, 2 * h, rng),
         LinearLayer(params, name + ".mlp_out", 2 * h, h, rng, true,
                     /*zero_init=*/true)});
  }
  norm_out_ = LayerNormLayer(params, prefix + ".norm_out", h);
  out_proj_ = LinearLayer(params, prefix + ".out_proj", h, latent_channels, rng,
                          true, /*zero_init=*/true);
}

ad::Var Denoiser::TimeEmbedding(int t) const {
  const int half = config_.time_dim / 2;
  Tensor e({config_.time_dim});
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    e[i] = std::sin(t * freq);
    e[half + i] = std::cos(t * freq);
  }
  return time2_(ad::Gelu(time1_(ad::Var(std::move(e)))));
}

ad::Var Denoiser::operator()(const ad::Var& ft, const ad::Var& condition,
                             int t) const {
  if (ft.shape() != condition.shape() || ft.shape().empty() ||
      ft.dim(0) != latent_channels_) {
    throw ShapeError("denoiser inputs " + ShapeToString(ft.shape()) + " and " +
                     ShapeToString(condition.shape()) + " must match {" +
                     std::to_string(latent_channels_) + ", h, w}");
  }
  if (t < 1) throw RangeError("diffusion step must be >= 1, got " + std::to_string(t));
  const int n = latent_channels_;
  const int tokens = static_cast<int>(ft.value().size() / n);
  const int hidden = config_.hidden;
  const int heads = config_.heads;
  const int d = hidden / heads;
  ad::Var x = in_proj_(ad::Concat({ad::Reshape(ft, {n, tokens}),
                                   ad::Reshape(condition, {n, tokens})}));
  x = ad::AddPerChannel(x, TimeEmbedding(t));
  for (const Block& blk : blocks_) {
    ad::Var qkv = blk.qkv(blk.norm1(x));
    std::vector<ad::Var> outs;
    for (int h = 0; h < heads; ++h) {
      ad::Var q = ad::Slice(qkv, h * d, d);
      ad::Var k = ad::Slice(qkv, hidden + h * d, d);
      ad::Var v = ad::Slice(qkv, 2 * hidden + h * d, d);
      ad::Var scores = ad::Scale(ad::MatMul(q, k, true, false),
                                 1.0 / std::sqrt(static_cast<double>(d)));
      outs.push_back(ad::MatMul(v, ad::SoftmaxRows(scores), false, true));
    }
    x = ad::Add(x, blk.proj(heads == 1 ? outs[0] : ad::Concat(outs)));
    x = ad::Add(x, blk.mlp_out(ad::Gelu(blk.mlp_in(blk.norm2(x)))));
  }
  return ad::Reshape(out_proj_(norm_out_(x)), ft.shape());
}

ad::Var RunReverseChain(const Denoiser& denoiser, const NoiseSchedule& schedule,
                        const ad::Var& condition, const ad::Var& start,
                        Rng& rng) {
  ad::Var f = start;
  for (int t = schedule.steps(); t >= 1; --t) {
    ad::Var eps_hat = denoiser(f, condition, t);
    const Tensor noise = t > 1 ? rng.NormalTensor(f.shape()) : Tensor();
    f = ReverseStep(f, eps_hat, t, schedule, noise);
  }
  return f;
}

ad::Var GeneratePrior(const Denoiser& denoiser, const NoiseSchedule& schedule,
                      const ad::Var& condition, uint64_t seed) {
  Rng rng(seed);
  ad::Var start(rng.NormalTensor(condition.shape()));
  return RunReverseChain(denoiser, schedule, condition, start, rng);
}

DiffusionSample DrawDiffusionSample(const Shape& shape,
                                    const NoiseSchedule& schedule, Rng& rng) {
  DiffusionSample s;
  s.t = 1 + static_cast<int>(rng.Below(static_cast<uint64_t>(schedule.steps())));
  s.eps = rng.NormalTensor(shape);
  return s;
}

ad::Var DiffusionTrainingLoss(const Denoiser& denoiser,
                              const NoiseSchedule& schedule, const Tensor& prior,
                              const ad::Var& condition,
                              const DiffusionSample& sample) {
  ad::Var ft(ForwardDiffuse(prior, sample.t, sample.eps, schedule));
  ad::Var pred = denoiser(ft, condition, sample.t);
  return ad::SumSquaredError(ad::Var(sample.eps), pred);
}

}  // namespace ldmric
