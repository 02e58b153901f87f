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
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "multibisage/common.h"

namespace multibisage {

using Edge = std::pair<NodeId, NodeId>;  // (pin id, ctx id)

/// Immutable bipartite graph between pin-side and context-side nodes
/// (boards, users, queries, ...). The two id spaces are independent: pin 7
/// and ctx 7 are different nodes.
///
/// Nodes are addressed internally by dense indices in first-appearance
/// order. Adjacency is stored as CSR in both directions, each neighbor list
/// sorted by neighbor id.
class BipartiteGraph {
 public:
  BipartiteGraph() = default;

  /// Builds a graph from an edge list. Duplicate edges are collapsed.
  /// `pin_order` / `ctx_order` register nodes (possibly edgeless) ahead of
  /// the edge scan; remaining nodes follow in first-appearance order.
  static BipartiteGraph from_edges(int graph_id, std::span<const Edge> edges,
                                   std::span<const NodeId> pin_order = {},
                                   std::span<const NodeId> ctx_order = {});

  int graph_id() const { return graph_id_; }
  std::size_t num_pins() const { return pin_ids_.size(); }
  std::size_t num_ctx() const { return ctx_ids_.size(); }
  std::size_t edge_count() const { return pin_adj_.size(); }

  std::span<const NodeId> pin_ids() const { return pin_ids_; }
  std::span<const NodeId> ctx_ids() const { return ctx_ids_; }

  std::optional<std::uint32_t> pin_index(NodeId id) const;
  std::optional<std::uint32_t> ctx_index(NodeId id) const;

  /// Context-side neighbor indices of pin `pin_idx`.
  std::span<const std::uint32_t> pin_neighbors(std::uint32_t pin_idx) const {
    return {pin_adj_.data() + pin_off_[pin_idx],
            pin_adj_.data() + pin_off_[pin_idx + 1]};
  }
  /// Pin-side neighbor indices of context node `ctx_idx`.
  std::span<const std::uint32_t> ctx_neighbors(std::uint32_t ctx_idx) const {
    return {ctx_adj_.data() + ctx_off_[ctx_idx],
            ctx_adj_.data() + ctx_off_[ctx_idx + 1]};
  }
  std::size_t pin_degree(std::uint32_t pin_idx) const {
    return pin_off_[pin_idx + 1] - pin_off_[pin_idx];
  }
  std::size_t ctx_degree(std::uint32_t ctx_idx) const {
    return ctx_off_[ctx_idx + 1] - ctx_off_[ctx_idx];
  }

  bool has_edge(NodeId pin, NodeId ctx) const;

  /// All edges, grouped by pin in index order, ctx ids ascending.
  std::vector<Edge> edges() const;

  /// Checks every structural invariant; throws DataError on violation.
  void validate() const;

 private:
  int graph_id_ = 0;
  std::vector<NodeId> pin_ids_;
  std::vector<NodeId> ctx_ids_;
  std::unordered_map<NodeId, std::uint32_t> pin_lookup_;
  std::unordered_map<NodeId, std::uint32_t> ctx_lookup_;
  std::vector<std::size_t> pin_off_{0};
  std::vector<std::uint32_t> pin_adj_;
  std::vector<std::size_t> ctx_off_{0};
  std::vector<std::uint32_t> ctx_adj_;
};

/// Reads `pin_id<TAB>ctx_id` lines. Throws ParseError with the line number
/// on malformed input and DataError("empty graph") when there are no edges.
BipartiteGraph load_edges(const std::string& path, int graph_id);

void save_edges(const BipartiteGraph& g, const std::string& path);

enum class PruneRule {
  kMinDegreeScaled,  // target = floor(min(a * p, b))
  kDegreeScaled,     // target = floor(min(deg(u) * p, b))
};

struct PruneConfig {
  std::size_t min_degree = 10;     // a
  std::size_t max_degree = 10000;  // b
  double prune_factor = 0.86;      // p
  std::uint64_t seed = 0;
  PruneRule rule = PruneRule::kMinDegreeScaled;

  void validate() const;
  /// Degree a node is cut down to when its current degree exceeds a.
  std::size_t target_degree(std::size_t current_degree) const;
};

enum class Side : std::uint8_t { kPin, kCtx };

struct PrunedNode {
  Side side;
  NodeId id;
  std::size_t degree_before;
  std::size_t degree_after;  // right after this node's own visit
};

struct PruneResult {
  BipartiteGraph graph;
  std::vector<PrunedNode> pruned;  // in visit order
};

/// Degree-based pruning. Visits pin-side nodes by ascending id, then
/// context-side nodes by ascending id; every node whose current degree
/// exceeds a loses uniformly random incident edges until it reaches
/// cfg.target_degree(). Deterministic in cfg.seed.
PruneResult degree_prune_with_report(const BipartiteGraph& g,
                                     const PruneConfig& cfg);

inline BipartiteGraph degree_prune(const BipartiteGraph& g,
                                   const PruneConfig& cfg) {
  return degree_prune_with_report(g, cfg).graph;
}

/// Parses "a,b,p".
PruneConfig parse_prune_spec(const std::string& spec, std::uint64_t seed);

}  // namespace multibisage
