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

#ifndef LDMRIC_LRM_H_
#define LDMRIC_LRM_H_

#include <string>
#include <vector>

#include "ldmric/nn.h"

namespace ldmric {

struct LrmConfig {
  int pu_factor = 4;
  // Widths of the convolution stages before the final one, which emits
  // latent_channels. The first stage keeps resolution; later ones halve it.
  std::vector<int> widths = {64, 128};
  int latent_channels = 256;  // N
  int latent_height = 4;      // h
  int latent_width = 4;       // w
  int residual_blocks = 5;    // per non-final stage
  double negative_slope = 0.2;

  void Validate() const;
  int tokens() const { return latent_height * latent_width; }
};

// Latent representation module. With two branches it maps (decoded,
// original) to the prior F; with one branch it maps the decoded image alone
// to the condition latent D. Output is {N, h, w}.
class Lrm {
 public:
  Lrm(ParameterSet& params, const std::string& prefix, const LrmConfig& config,
      int branches, Rng& rng, int image_channels = 3);

  ad::Var operator()(const ad::Var& decoded, const ad::Var& original) const;
  ad::Var operator()(const ad::Var& decoded) const;

  int branches() const { return branches_; }
  const LrmConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

 private:
  struct ResBlock {
    Conv2dLayer a, b;
  };
  ad::Var Act(const ad::Var& x) const;
  ad::Var Trunk(const ad::Var& unshuffled) const;

  LrmConfig config_;
  int branches_;
  int image_channels_;
  std::string prefix_;
  std::vector<Conv2dLayer> convs_;
  std::vector<std::vector<ResBlock>> blocks_;
  LinearLayer mix1_, mix2_;
};

// Copies every LRM parameter into the single-branch LRM_DM. The first conv
// receives the input-channel slice that belongs to the decoded branch.
void InitSingleBranchFromLrm(ParameterSet& dst, const std::string& dst_prefix,
                             const ParameterSet& src,
                             const std::string& src_prefix);

}  // namespace ldmric

#endif  // LDMRIC_LRM_H_
