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

#include "multibisage/features.h"
#include "multibisage/model.h"
#include "multibisage/tensor.h"
#include "multibisage/trainer.h"
#include "multibisage/walker.h"

namespace multibisage {

struct EvalConfig {
  std::size_t k = 10;
  std::size_t pool_size = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  void validate() const;
};

/// Pin id -> embedding row.
class Embeddings {
 public:
  Embeddings() = default;
  explicit Embeddings(std::size_t dim) : dim_(dim) {}

  void add(NodeId id, std::span<const double> values);
  bool contains(NodeId id) const { return index_.contains(id); }
  /// Throws DataError for unknown ids.
  std::span<const double> operator()(NodeId id) const;
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return index_.size(); }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<NodeId, std::size_t> index_;
  std::vector<double> values_;
};

/// Embeds every id in `ids` with the trained tower.
Embeddings embed_pins(std::span<const NodeId> ids, const ModelParams& params, const ModelConfig& cfg,
                      std::span<const int> graph_ids, const FeatureStore& features,
                      const NeighborTable& table, unsigned threads);

/// `pool_size` distinct ids drawn uniformly from `catalog` (all of it when
/// the catalog is smaller), in draw order.
std::vector<NodeId> sample_pool(std::span<const NodeId> catalog, std::size_t pool_size,
                                std::uint64_t seed);

/// 1-based rank of `engaged` among pool + engaged by dot product with
/// `query`. Distractors scoring equal to the engaged item rank ahead of it.
std::size_t rank_of(std::span<const double> query, std::span<const double> engaged,
                    std::span<const std::span<const double>> pool);
/// Same by id; the query and engaged ids are skipped if present in the pool.
std::size_t rank_of(NodeId query, NodeId engaged, std::span<const NodeId> pool,
                    const Embeddings& embed);

struct EvalResult {
  double recall = 0.0;
  std::size_t hits = 0;
  std::vector<std::size_t> ranks;  // aligned with the pairs
  /// Expected recall of a model that ranks at random: mean of k / (m_i + 1)
  /// where m_i is the number of distractors pair i actually competed with.
  double null_recall = 0.0;
  /// Binomial standard deviation of the null recall.
  double null_sigma = 0.0;
};

EvalResult evaluate(std::span<const Pair> pairs, const Embeddings& embed,
                    std::span<const NodeId> pool, std::size_t k, unsigned threads);

inline double recall_at_k(std::span<const Pair> pairs, const Embeddings& embed,
                          std::span<const NodeId> pool, std::size_t k, unsigned threads = 1) {
  return evaluate(pairs, embed, pool, k, threads).recall;
}

/// Writes `query<TAB>engaged<TAB>rank<TAB>hit` rows.
void dump_ranks(std::span<const Pair> pairs, const EvalResult& result, std::size_t k,
                const std::string& path);

}  // namespace multibisage
