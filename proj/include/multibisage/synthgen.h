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
#include <string>
#include <vector>

#include "multibisage/features.h"
#include "multibisage/graph.h"
#include "multibisage/trainer.h"

namespace multibisage {

struct SynthConfig {
  std::size_t num_pins = 5000;
  std::size_t num_ctx = 2500;  // per graph
  std::size_t clusters = 20;
  double intra_edge_prob = 0.008;
  double inter_edge_noise = 3e-5;
  double feature_noise = 0.5;  // per-coordinate gaussian sigma
  std::size_t pair_count = 10000;
  double pair_noise = 0.02;    // probability a pair is cross-cluster
  std::size_t visual_dim = 24;
  std::size_t text_dim = 8;
  std::uint64_t seed = 0;
  std::vector<double> informativeness{1.0, 0.7, 0.4};  // one per graph

  std::size_t num_graphs() const { return informativeness.size(); }
  void validate() const;
};

struct Corpus {
  std::vector<BipartiteGraph> graphs;
  FeatureStore features;
  std::vector<Pair> train_pairs, test_pairs;
  std::vector<std::uint32_t> pin_cluster;  // by pin index (pin id - 1)
  std::vector<std::vector<std::uint32_t>> ctx_cluster;  // per graph, by ctx index
};

/// Planted-cluster corpus. Pins and context nodes get uniform random
/// clusters. A pin links to a same-cluster context node with probability
/// inf * intra_edge_prob + (1 - inf) * inter_edge_noise and to any other
/// with probability inter_edge_noise, so a graph with informativeness 0
/// carries no cluster signal. Features are a per-cluster unit centroid plus
/// gaussian noise. A pair's engaged pin co-occurs with the query on a shared
/// same-cluster context node, in a graph drawn proportionally to its
/// informativeness among those where such a node exists; queries with no
/// such node are redrawn. Only when no pin in the corpus has a same-cluster
/// co-occurrence is the engaged pin a uniform same-cluster pin instead.
/// With probability pair_noise it is a random pin of another cluster (any
/// other pin when C = 1). Pairs are deduplicated and split 90/10.
Corpus gen_corpus(const SynthConfig& cfg);

/// Writes graph_<i>.tsv, features.bin, train_pairs.tsv and test_pairs.tsv
/// into `dir` (created if needed).
void write_corpus(const Corpus& corpus, const std::string& dir);

std::vector<Pair> load_pairs(const std::string& path);
void save_pairs(const std::vector<Pair>& pairs, const std::string& path);

}  // namespace multibisage
