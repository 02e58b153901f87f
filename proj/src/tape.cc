// Copyright 2026 The MultiBiSage Authors
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

#include "multibisage/tape.h"

#include "multibisage/common.h"

namespace multibisage {

Tape::Id Tape::leaf(Tensor value) {
  nodes_.push_back({std::move(value), {}, false, false, {}});
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::push(Tensor value, Backward fn) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_;
  if (record_) n.fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Tape::grad(Id id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = n.value.zeros_like();
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(Id id, const Tensor& g) {
  if (!nodes_[id].needs_grad) return;
  grad(id) += g;
}

void Tape::backward(Id root, const Tensor& seed) {
  if (!record_) throw ConfigError("Tape::backward on a non-recording tape");
  if (!nodes_[root].value.same_shape(seed) && nodes_[root].value.size() != seed.size()) {
    throw ConfigError("Tape::backward: seed shape mismatch");
  }
  grad(root) += seed;
  for (Id i = root + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.fn && n.has_grad) n.fn(*this, i);
  }
}

}  // namespace multibisage
