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
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "multibisage/common.h"
#include "multibisage/model.h"
#include "multibisage/walker.h"

namespace multibisage {

/// Per-pin visual and textual feature vectors, held at 32-bit precision
/// (the on-disk precision) so a save/load round trip is exact.
class FeatureStore {
 public:
  FeatureStore() = default;
  FeatureStore(std::size_t visual_dim, std::size_t text_dim)
      : visual_dim_(visual_dim), text_dim_(text_dim) {}

  std::size_t visual_dim() const { return visual_dim_; }
  std::size_t text_dim() const { return text_dim_; }
  std::size_t size() const { return ids_.size(); }
  /// Pin ids in insertion order.
  std::span<const NodeId> ids() const { return ids_; }

  /// Adds or replaces a pin's features.
  void set(NodeId pin, std::span<const double> visual, std::span<const double> text);
  bool contains(NodeId pin) const { return index_.contains(pin); }
  /// Throws DataError for unknown pins.
  std::span<const float> visual(NodeId pin) const;
  std::span<const float> text(NodeId pin) const;

  friend bool operator==(const FeatureStore&, const FeatureStore&) = default;

 private:
  std::size_t slot(NodeId pin) const;

  std::size_t visual_dim_ = 0, text_dim_ = 0;
  std::vector<NodeId> ids_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::vector<float> values_;  // per pin: visual then text
};

/// Binary layout: "BSFT", u32 count, u32 d_v, u32 d_t, then per pin u64 id
/// followed by d_v + d_t f32 values, all little-endian.
void save_features(const FeatureStore& store, const std::string& path);
FeatureStore load_features(const std::string& path);

/// Assembles the model input for `pin`: its own features plus, for each
/// graph in `graph_ids` (in order), the features of its first cfg.neighbors
/// table neighbors. Missing slots are zero rows with mask 0.
PinContext build_context(NodeId pin, const FeatureStore& features, const NeighborTable& table,
                         std::span<const int> graph_ids, const ModelConfig& cfg);

}  // namespace multibisage
