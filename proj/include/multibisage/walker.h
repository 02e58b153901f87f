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
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "multibisage/graph.h"

namespace multibisage {

struct WalkConfig {
  std::size_t nw = 2000;   // walk segments per start pin
  double alpha = 0.5;      // per-step reset probability
  std::size_t top_k = 50;
  std::uint64_t seed = 0;
  unsigned threads = 0;    // 0 = hardware concurrency

  void validate() const;
};

struct Neighbor {
  NodeId id;
  std::uint64_t visits;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Per (pin, graph) list of the most-visited pin neighbors, sorted by visit
/// count descending then id ascending.
class NeighborTable {
 public:
  using Key = std::pair<int, NodeId>;  // (graph id, pin id)

  void set(int graph_id, NodeId pin, std::vector<Neighbor> neighbors);
  /// Empty when the pin has no entry for this graph.
  std::span<const Neighbor> neighbors(int graph_id, NodeId pin) const;
  bool contains(int graph_id, NodeId pin) const;
  std::vector<int> graph_ids() const;
  std::size_t size() const { return lists_.size(); }

  /// Copies all entries of `other` into this table, overwriting on conflict.
  void merge(const NeighborTable& other);

  const std::map<Key, std::vector<Neighbor>>& entries() const { return lists_; }

  friend bool operator==(const NeighborTable&, const NeighborTable&) = default;

 private:
  std::map<Key, std::vector<Neighbor>> lists_;
};

/// Restart random walks from every start pin. For each start p, nw segments
/// each begin at p; every hop moves to a uniform neighbor, pin-side landings
/// other than p are counted, and the segment ends with probability alpha
/// after each hop. The RNG stream of a start pin depends only on
/// (seed, pin id, graph id), so results do not depend on cfg.threads.
NeighborTable run_walks(const BipartiteGraph& g, std::span<const NodeId> starts,
                        const WalkConfig& cfg);

/// Expected number of visits per segment to each pin reached from `pin`,
/// summing (1 - alpha)^(t-1) [P^t]_{pin,.} until the tail mass drops below
/// `tol`. The start pin itself is excluded.
std::map<NodeId, double> exact_visit_distribution(const BipartiteGraph& g,
                                                  NodeId pin, double alpha,
                                                  double tol);

/// TSV rows `pin_id<TAB>graph_id<TAB>rank<TAB>neighbor_id<TAB>visits`,
/// ranks starting at 1.
void save_neighbor_table(const NeighborTable& table, const std::string& path);
NeighborTable load_neighbor_table(const std::string& path);

}  // namespace multibisage
