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

#ifndef LDMRIC_OPTIMIZER_H_
#define LDMRIC_OPTIMIZER_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ldmric/autograd.h"

namespace ldmric {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::string name;
  Tensor m, v;
};

struct AdamState {
  int64_t step = 0;
  std::vector<AdamMoments> moments;
};

// Adam with bias correction. Parameters without an accumulated gradient are
// skipped for the step.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, ad::Var>> params, AdamConfig config);

  // Throws TrainingError before touching anything if a gradient is not
  // finite.
  void Step(double lr);
  void ZeroGrad();

  int64_t step() const { return state_.step; }
  const AdamState& state() const { return state_; }
  // Moments are matched by name; shapes must agree.
  void LoadState(const AdamState& state);
  const std::vector<std::pair<std::string, ad::Var>>& params() const {
    return params_;
  }

 private:
  std::vector<std::pair<std::string, ad::Var>> params_;
  AdamConfig config_;
  AdamState state_;
};

struct LrSchedule {
  enum class Kind { kConstant, kCosine, kStep };
  Kind kind = Kind::kCosine;
  double initial = 1e-4;
  double floor = 1e-6;        // cosine end value
  int64_t total = 1;          // iterations covered by the schedule
  int64_t hold = 0;           // cosine: constant iterations before annealing
  int64_t decay_every = 80000;  // step: period
  double decay_factor = 0.1;    // step: multiplier per period

  // Rate for the zero-based `iteration` counted from the schedule start.
  // Cosine reaches `floor` at iteration total - 1.
  double At(int64_t iteration) const;
  void Validate() const;
};

LrSchedule::Kind ParseLrScheduleKind(const std::string& name);

}  // namespace ldmric

#endif  // LDMRIC_OPTIMIZER_H_
