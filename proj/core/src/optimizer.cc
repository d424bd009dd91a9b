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

#include "ldmric/optimizer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "ldmric/errors.h"

namespace ldmric {

Adam::Adam(std::vector<std::pair<std::string, ad::Var>> params,
           AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& [name, p] : params_) {
    state_.moments.push_back({name, Tensor(p.shape(), 0.0), Tensor(p.shape(), 0.0)});
  }
}

void Adam::ZeroGrad() {
  for (auto& [name, p] : params_) {
    ad::Var handle = p;
    handle.ZeroGrad();
  }
}

void Adam::Step(double lr) {
  for (const auto& [name, p] : params_) {
    if (p.has_grad() && !p.grad().AllFinite()) {
      throw TrainingError("non-finite gradient for " + name);
    }
  }
  const int64_t step = state_.step + 1;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  // Dry run first: a step whose results would not survive float32 storage
  // leaves everything untouched.
  constexpr double kLimit = std::numeric_limits<float>::max();
  const double eps = config_.eps;
  const double step_size = lr / c1, inv_sqrt_c2 = 1.0 / std::sqrt(c2);
  for (int pass = 0; pass < 2; ++pass) {
    for (size_t k = 0; k < params_.size(); ++k) {
      ad::Var p = params_[k].second;
      if (!p.has_grad()) continue;
      const double* g = p.grad().data();
      double* m = state_.moments[k].m.data();
      double* v = state_.moments[k].v.data();
      double* w = p.mutable_value().data();
      const int64_t n = p.value().size();
      if (pass == 0) {
        int64_t bad = 0;
        for (int64_t i = 0; i < n; ++i) {
          const double mi = b1 * m[i] + (1.0 - b1) * g[i];
          const double vi = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
          const double wi =
              w[i] - step_size * mi / (std::sqrt(vi) * inv_sqrt_c2 + eps);
          bad += !(std::abs(mi) <= kLimit) | !(vi <= kLimit) |
                 !(std::abs(wi) <= kLimit);
        }
        if (bad) {
          throw TrainingError("update leaves the representable range for " +
                              params_[k].first);
        }
        continue;
      }
      for (int64_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
      }
    }
  }
  state_.step = step;
}

void Adam::LoadState(const AdamState& state) {
  std::unordered_map<std::string, const AdamMoments*> by_name;
  for (const AdamMoments& mo : state.moments) by_name[mo.name] = &mo;
  for (AdamMoments& mo : state_.moments) {
    auto it = by_name.find(mo.name);
    if (it == by_name.end()) {
      throw ConfigError("optimizer state lacks moments for " + mo.name);
    }
    if (!it->second->m.SameShape(mo.m) || !it->second->v.SameShape(mo.v)) {
      throw ConfigError("optimizer moment shape mismatch for " + mo.name);
    }
    mo.m = it->second->m;
    mo.v = it->second->v;
  }
  state_.step = state.step;
}

double LrSchedule::At(int64_t iteration) const {
  switch (kind) {
    case Kind::kConstant:
      return initial;
    case Kind::kStep: {
      const int64_t periods = std::max<int64_t>(0, iteration) / decay_every;
      return initial * std::pow(decay_factor, static_cast<double>(periods));
    }
    case Kind::kCosine: {
      if (iteration < hold) return initial;
      const int64_t span = total - hold - 1;
      const double p =
          span <= 0 ? 1.0
                    : std::clamp(static_cast<double>(iteration - hold) / span,
                                 0.0, 1.0);
      return floor + 0.5 * (initial - floor) * (1.0 + std::cos(std::numbers::pi * p));
    }
  }
  return initial;
}

void LrSchedule::Validate() const {
  if (!(initial > 0.0)) throw ConfigError("learning rate must be > 0");
  if (kind == Kind::kCosine && !(floor >= 0.0 && floor <= initial)) {
    throw ConfigError("cosine floor must lie in [0, initial learning rate]");
  }
  if (kind == Kind::kStep && (decay_every < 1 || !(decay_factor > 0.0))) {
    throw ConfigError("step decay needs decay_every >= 1 and decay_factor > 0");
  }
  if (hold < 0) throw ConfigError("cosine hold must be >= 0");
}

LrSchedule::Kind ParseLrScheduleKind(const std::string& name) {
  if (name == "constant") return LrSchedule::Kind::kConstant;
  if (name == "cosine") return LrSchedule::Kind::kCosine;
  if (name == "step") return LrSchedule::Kind::kStep;
  throw ConfigError("unknown lr schedule '" + name +
                    "' (expected constant, cosine or step)");
}

}  // namespace ldmric
