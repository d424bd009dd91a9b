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

#ifndef LDMRIC_AUTOGRAD_H_
#define LDMRIC_AUTOGRAD_H_

#include <functional>
#include <memory>
#include <vector>

#include "ldmric/tensor.h"

namespace ldmric::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the dynamic computation graph. `backward` reads `grad` and
// accumulates into the gradients of `inputs`. Nodes that do not require a
// gradient keep neither inputs nor a backward closure, so graphs built over
// frozen parameters are released as soon as their outputs are.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;

  // Lazily allocated gradient buffer of the same shape as `value`.
  Tensor& GradBuffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }

  // Gradient accumulated by Backward(); zeros if none has flowed yet.
  const Tensor& grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void ZeroGrad() { node_->grad = Tensor(); }

  const NodePtr& node() const { return node_; }

 private:
  friend Var MakeResult(Tensor, std::vector<Var>, std::function<void(Node&)>);
  NodePtr node_;
};

// Builds an op output. The backward closure is kept only when an input
// requires a gradient and gradient recording is enabled.
Var MakeResult(Tensor value, std::vector<Var> inputs,
               std::function<void(Node&)> backward);

// Reverse-mode sweep from a scalar root, seeding d(root)/d(root) = 1.
// Gradients accumulate into leaves; call ZeroGrad() between steps.
void Backward(const Var& root);

// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

}  // namespace ldmric::ad

#endif  // LDMRIC_AUTOGRAD_H_
