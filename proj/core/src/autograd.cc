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

#include "ldmric/autograd.h"

#include <unordered_set>

#include "ldmric/errors.h"

namespace ldmric::ad {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

Tensor& Node::GradBuffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::grad() const {
  if (node_->grad.empty()) node_->grad = Tensor(node_->value.shape(), 0.0);
  return node_->grad;
}

Var MakeResult(Tensor value, std::vector<Var> inputs,
               std::function<void(Node&)> backward) {
  Var out;
  out.node_ = std::make_shared<Node>();
  out.node_->value = std::move(value);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Var& v : inputs) any = any || (v.defined() && v.requires_grad());
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs.reserve(inputs.size());
  for (const Var& v : inputs) out.node_->inputs.push_back(v.node());
  out.node_->backward = std::move(backward);
  return out;
}

void Backward(const Var& root) {
  if (!root.defined() || !root.requires_grad()) return;
  if (root.value().size() != 1) {
    throw ShapeError("Backward needs a scalar root, got " +
                     ShapeToString(root.shape()));
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->GradBuffer()[0] += 1.0;
  // Interior gradients are released as soon as they have been propagated.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    if (!n->grad.empty()) n->backward(*n);
    n->grad = Tensor();
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool GradEnabled() { return g_grad_enabled; }

}  // namespace ldmric::ad
