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

#ifndef LDMRIC_LDM_H_
#define LDMRIC_LDM_H_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ldmric/errors.h"
#include "ldmric/nn.h"

namespace ldmric {

// eta_t, gamma_t = 1 - eta_t and gamma_bar_t = prod_{s<=t} gamma_s, with
// 1-based step indices.
class NoiseSchedule {
 public:
  // gamma_bar spaced geometrically from 0.64 at t = 1 to 0.01 at t = T;
  // T = 1 uses eta_1 = 0.99.
  static NoiseSchedule Build(int steps);
  // Validates 0 < eta < 1, strictly decreasing gamma_bar and
  // gamma_bar_T <= 0.01.
  static NoiseSchedule FromEta(std::vector<double> eta);

  int steps() const { return static_cast<int>(eta_.size()); }
  double eta(int t) const { return eta_[Index(t)]; }
  double gamma(int t) const { return gamma_[Index(t)]; }
  double gamma_bar(int t) const { return gamma_bar_[Index(t)]; }
  const std::vector<double>& etas() const { return eta_; }

 private:
  size_t Index(int t) const;

  std::vector<double> eta_, gamma_, gamma_bar_;
};

// Elementwise kernels shared by the double-precision pipeline and the
// single-precision checks.
template <typename Real>
void ForwardDiffuseKernel(const Real* f0, const Real* eps, Real* out, int64_t n,
                          double gamma_bar) {
  const Real a = static_cast<Real>(std::sqrt(gamma_bar));
  const Real b = static_cast<Real>(std::sqrt(1.0 - gamma_bar));
  for (int64_t i = 0; i < n; ++i) out[i] = a * f0[i] + b * eps[i];
}

// F_{t-1} = (F_t - (1 - g) / sqrt(1 - gb) * eps_hat) / sqrt(g)
//           + sqrt(1 - g) * noise; noise may be null.
template <typename Real>
void ReverseStepKernel(const Real* ft, const Real* eps_hat, const Real* noise,
                       Real* out, int64_t n, double gamma, double gamma_bar) {
  const Real inv = static_cast<Real>(1.0 / std::sqrt(gamma));
  const Real c = static_cast<Real>((1.0 - gamma) / std::sqrt(1.0 - gamma_bar));
  const Real s = static_cast<Real>(std::sqrt(1.0 - gamma));
  for (int64_t i = 0; i < n; ++i) {
    Real v = inv * (ft[i] - c * eps_hat[i]);
    if (noise) v += s * noise[i];
    out[i] = v;
  }
}

Tensor ForwardDiffuse(const Tensor& f0, int t, const Tensor& eps,
                      const NoiseSchedule& schedule);
// Differentiable forms. `noise` may be undefined; it must be undefined or
// zero at t = 1.
ad::Var ForwardDiffuse(const ad::Var& f0, int t, const Tensor& eps,
                       const NoiseSchedule& schedule);
ad::Var ReverseStep(const ad::Var& ft, const ad::Var& eps_hat, int t,
                    const NoiseSchedule& schedule, const Tensor& noise);

struct DenoiserConfig {
  int hidden = 256;
  int blocks = 4;
  int heads = 4;
  int time_dim = 64;
  void Validate() const;
};

// Noise predictor over the {N, h, w} latent viewed as h*w tokens of N
// channels. The condition D is concatenated channelwise, a sinusoidal step
// embedding is added to every token and residual attention/MLP blocks mix
// the tokens. The output projection starts at zero.
class Denoiser {
 public:
  Denoiser(ParameterSet& params, const std::string& prefix,
           const DenoiserConfig& config, int latent_channels, Rng& rng);
  ad::Var operator()(const ad::Var& ft, const ad::Var& condition, int t) const;

 private:
  struct Block {
    LayerNormLayer norm1, norm2;
    LinearLayer qkv, proj, mlp_in, mlp_out;
  };
  ad::Var TimeEmbedding(int t) const;

  DenoiserConfig config_;
  int latent_channels_;
  LinearLayer in_proj_, time1_, time2_;
  std::vector<Block> blocks_;
  LayerNormLayer norm_out_;
  LinearLayer out_proj_;
};

// Runs the T reverse steps from `start` (F_T) conditioned on D. Intermediate
// steps draw fresh unit Gaussian noise from `rng`; the last step adds none.
ad::Var RunReverseChain(const Denoiser& denoiser, const NoiseSchedule& schedule,
                        const ad::Var& condition, const ad::Var& start, Rng& rng);

// Inference-time generation: F_T ~ N(0, I) drawn from `seed`.
ad::Var GeneratePrior(const Denoiser& denoiser, const NoiseSchedule& schedule,
                      const ad::Var& condition, uint64_t seed);

struct DiffusionSample {
  int t = 1;
  Tensor eps;
};
DiffusionSample DrawDiffusionSample(const Shape& shape,
                                    const NoiseSchedule& schedule, Rng& rng);

// ||eps - eps_w(sqrt(gb_t) F + sqrt(1 - gb_t) eps, D, t)||^2 for a drawn
// (t, eps). F is a constant target; D keeps its graph.
ad::Var DiffusionTrainingLoss(const Denoiser& denoiser,
                              const NoiseSchedule& schedule, const Tensor& prior,
                              const ad::Var& condition,
                              const DiffusionSample& sample);

}  // namespace ldmric

#endif  // LDMRIC_LDM_H_
