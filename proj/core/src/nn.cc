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

#include "ldmric/nn.h"

#include <algorithm>
#include <cmath>

#include "ldmric/errors.h"
#include "ldmric/ops.h"

namespace ldmric {
namespace {

Tensor UniformInit(const Shape& shape, int fan_in, Rng& rng, bool zero) {
  if (zero) return Tensor(shape, 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rng.UniformTensor(shape, -bound, bound);
}

}  // namespace

ad::Var ParameterSet::Add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
  ad::Var v(std::move(init), /*requires_grad=*/true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, v);
  return v;
}

const ad::Var& ParameterSet::Get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return entries_[it->second].second;
}

bool ParameterSet::Contains(const std::string& name) const {
  return index_.count(name) > 0;
}

int64_t ParameterSet::NumScalars() const {
  int64_t n = 0;
  for (const auto& [name, v] : entries_) n += v.value().size();
  return n;
}

void ParameterSet::SetTrainable(bool trainable) {
  for (auto& [name, v] : entries_) {
    ad::Var handle = v;
    handle.set_requires_grad(trainable);
  }
}

void ParameterSet::ZeroGrad() {
  for (auto& [name, v] : entries_) {
    ad::Var handle = v;
    handle.ZeroGrad();
  }
}

void ParameterSet::CopyValuesFrom(const ParameterSet& src,
                                  const std::string& src_prefix,
                                  const std::string& dst_prefix,
                                  const std::vector<std::string>& skip) {
  for (auto& [name, v] : entries_) {
    if (name.rfind(dst_prefix, 0) != 0) continue;
    if (std::find(skip.begin(), skip.end(), name) != skip.end()) continue;
    const std::string src_name = src_prefix + name.substr(dst_prefix.size());
    if (!src.Contains(src_name)) {
      throw ConfigError("source parameters lack " + src_name);
    }
    const Tensor& value = src.Get(src_name).value();
    if (value.shape() != v.shape()) {
      throw ConfigError("shape mismatch copying " + src_name + " " +
                        ShapeToString(value.shape()) + " into " + name + " " +
                        ShapeToString(v.shape()));
    }
    ad::Var handle = v;
    handle.mutable_value() = value;
  }
}

Conv2dLayer::Conv2dLayer(ParameterSet& params, const std::string& name,
                         int in_channels, int out_channels, int kernel,
                         int stride, Rng& rng, bool bias, bool zero_init)
    : stride_(stride), padding_(kernel / 2) {
  const int fan_in = in_channels * kernel * kernel;
  weight_ = params.Add(name + ".weight",
                       UniformInit({out_channels, in_channels, kernel, kernel},
                                   fan_in, rng, zero_init));
  if (bias) {
    bias_ = params.Add(name + ".bias",
                       UniformInit({out_channels}, fan_in, rng, zero_init));
  }
}

ad::Var Conv2dLayer::operator()(const ad::Var& x) const {
  return ad::Conv2d(x, weight_, bias_, stride_, padding_);
}

DepthwiseConvLayer::DepthwiseConvLayer(ParameterSet& params,
                                       const std::string& name, int channels,
                                       int kernel, Rng& rng)
    : padding_(kernel / 2) {
  const int fan_in = kernel * kernel;
  weight_ = params.Add(name + ".weight",
                       UniformInit({channels, kernel, kernel}, fan_in, rng, false));
  bias_ = params.Add(name + ".bias", UniformInit({channels}, fan_in, rng, false));
}

ad::Var DepthwiseConvLayer::operator()(const ad::Var& x) const {
  return ad::DepthwiseConv2d(x, weight_, bias_, padding_);
}

LinearLayer::LinearLayer(ParameterSet& params, const std::string& name,
                         int in_features, int out_features, Rng& rng,
                         bool bias, bool zero_init)
    : out_features_(out_features) {
  weight_ = params.Add(name + ".weight",
                       UniformInit({out_features, in_features}, in_features,
                                   rng, zero_init));
  if (bias) {
    bias_ = params.Add(name + ".bias",
                       UniformInit({out_features}, in_features, rng, zero_init));
  }
}

ad::Var LinearLayer::operator()(const ad::Var& x) const {
  const Shape in_shape = x.shape();
  const int in_features = in_shape[0];
  const int positions = static_cast<int>(x.value().size() / in_features);
  ad::Var flat = in_shape.size() == 2 ? x : ad::Reshape(x, {in_features, positions});
  ad::Var y = ad::MatMul(weight_, flat);
  if (bias_.defined()) y = ad::AddPerChannel(y, bias_);
  if (in_shape.size() == 2) return y;
  Shape out_shape = in_shape;
  out_shape[0] = out_features_;
  return ad::Reshape(y, out_shape);
}

LayerNormLayer::LayerNormLayer(ParameterSet& params, const std::string& name,
                               int channels) {
  gamma_ = params.Add(name + ".gamma", Tensor({channels}, 1.0));
  beta_ = params.Add(name + ".beta", Tensor({channels}, 0.0));
}

ad::Var LayerNormLayer::operator()(const ad::Var& x) const {
  return ad::LayerNormChannels(x, gamma_, beta_);
}

}  // namespace ldmric
