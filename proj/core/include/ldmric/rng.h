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

#ifndef LDMRIC_RNG_H_
#define LDMRIC_RNG_H_

#include <cstdint>
#include <initializer_list>
#include <random>

#include "ldmric/tensor.h"

namespace ldmric {

// Mixes a list of integers into one 64-bit seed (SplitMix64 finalizer), so
// independent streams can be derived from (seed, sample id, epoch, ...).
uint64_t DeriveSeed(std::initializer_list<uint64_t> parts);

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  double Uniform(double lo, double hi);
  double Normal();
  // Uniform integer in [0, n).
  uint64_t Below(uint64_t n);
  bool Bernoulli(double p) { return Uniform(0.0, 1.0) < p; }

  Tensor NormalTensor(const Shape& shape);
  Tensor UniformTensor(const Shape& shape, double lo, double hi);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace ldmric

#endif  // LDMRIC_RNG_H_
