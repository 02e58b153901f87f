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

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "multibisage/tensor.h"

namespace multibisage {

/// Records the activations of one forward computation together with a
/// backward closure per node. Parameters are not nodes: closures capture
/// the parameter tensors and accumulate into caller-owned gradient buffers.
class Tape {
 public:
  using Id = std::uint32_t;
  using Backward = std::function<void(Tape&, Id)>;

  /// When `record` is false no closures are kept (inference mode).
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  /// Constant input; never receives a gradient.
  Id leaf(Tensor value);
  /// Result of an op. `fn(tape, self)` must read grad(self) and accumulate
  /// into the op's inputs and parameters.
  Id push(Tensor value, Backward fn);

  const Tensor& value(Id id) const { return nodes_[id].value; }
  bool needs_grad(Id id) const { return nodes_[id].needs_grad; }
  /// Gradient buffer of a node, zero-initialized on first access.
  Tensor& grad(Id id);
  void accumulate(Id id, const Tensor& g);

  /// Seeds d(root) and runs closures in reverse creation order.
  void backward(Id root, const Tensor& seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool has_grad = false;
    Backward fn;
  };
  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace multibisage
