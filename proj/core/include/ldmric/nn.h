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

#ifndef LDMRIC_NN_H_
#define LDMRIC_NN_H_

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ldmric/autograd.h"
#include "ldmric/rng.h"

namespace ldmric {

// Ordered collection of named trainable arrays. Names are fully qualified,
// e.g. "men.enc0.block0.attn.qkv.weight", and double as checkpoint keys.
class ParameterSet {
 public:
  ad::Var Add(const std::string& name, Tensor init);
  const ad::Var& Get(const std::string& name) const;
  bool Contains(const std::string& name) const;

  const std::vector<std::pair<std::string, ad::Var>>& entries() const {
    return entries_;
  }
  size_t size() const { return entries_.size(); }
  int64_t NumScalars() const;

  void SetTrainable(bool trainable);
  void ZeroGrad();

  // Copies values for every parameter whose name starts with `dst_prefix`
  // from the parameter in `src` named with `src_prefix` instead. Shapes must
  // agree unless the name is listed in `skip`.
  void CopyValuesFrom(const ParameterSet& src, const std::string& src_prefix,
                      const std::string& dst_prefix,
                      const std::vector<std::string>& skip = {});

 private:
  std::vector<std::pair<std::string, ad::Var>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); layers created
// with zero_init start at exactly zero (weights and bias).
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(ParameterSet& params, const std::string& name, int in_channels,
              int out_channels, int kernel, int stride, Rng& rng,
              bool bias = true, bool zero_init = false);
  ad::Var operator()(const ad::Var& x) const;

  const ad::Var& weight() const { return weight_; }
  const ad::Var& bias() const { return bias_; }

 private:
  ad::Var weight_, bias_;
  int stride_ = 1;
  int padding_ = 0;
};

class DepthwiseConvLayer {
 public:
  DepthwiseConvLayer() = default;
  DepthwiseConvLayer(ParameterSet& params, const std::string& name,
                     int channels, int kernel, Rng& rng);
  ad::Var operator()(const ad::Var& x) const;

 private:
  ad::Var weight_, bias_;
  int padding_ = 0;
};

// Channel mixing y = W x + b applied at every position of a {C_in, ...}
// tensor.
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(ParameterSet& params, const std::string& name, int in_features,
              int out_features, Rng& rng, bool bias = true,
              bool zero_init = false);
  ad::Var operator()(const ad::Var& x) const;

  const ad::Var& weight() const { return weight_; }
  const ad::Var& bias() const { return bias_; }

 private:
  ad::Var weight_, bias_;
  int out_features_ = 0;
};

// Per-position normalization over channels with learned scale and shift.
class LayerNormLayer {
 public:
  LayerNormLayer() = default;
  LayerNormLayer(ParameterSet& params, const std::string& name, int channels);
  ad::Var operator()(const ad::Var& x) const;

 private:
  ad::Var gamma_, beta_;
};

}  // namespace ldmric

#endif  // LDMRIC_NN_H_
