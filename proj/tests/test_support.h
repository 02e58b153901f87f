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

// Shared fixtures for the test binaries.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "multibisage/graph.h"
#include "multibisage/model.h"

namespace multibisage::testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Random bipartite graph with pin ids 1..pins and ctx ids 1..ctx. Every
/// pin gets at least one edge.
BipartiteGraph random_graph(std::size_t pins, std::size_t ctx, double edge_prob,
                            std::uint64_t seed, int graph_id = 0);

Tensor random_tensor(std::vector<std::size_t> dims, std::mt19937_64& rng, double scale = 1.0);

/// Context with random features; graph i gets `filled[i]` real neighbors
/// (all n when `filled` is empty).
PinContext random_context(const ModelConfig& cfg, std::mt19937_64& rng, NodeId pin = 1,
                          const std::vector<std::size_t>& filled = {});

/// Toy dimensions shared by the gradient checks.
ModelConfig toy_config(Variant v, EncoderMode mode = EncoderMode::kAttentionOnly);

std::string read_file(const std::string& path);

/// Expected pin visits per walk segment from `pin`, obtained by solving
/// x (I - (1 - alpha) P) = e_pin P over all nodes with dense elimination.
/// Independent of the library's truncated power series.
std::map<NodeId, double> solve_visit_distribution(const BipartiteGraph& g, NodeId pin,
                                                  double alpha);

}  // namespace multibisage::testing
