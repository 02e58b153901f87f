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

#include "multibisage/eval.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace multibisage {

void EvalConfig::validate() const {
  if (k < 1) throw ConfigError("eval: k must be >= 1");
  if (pool_size < k) throw ConfigError("eval: pool_size must be >= k");
}

void Embeddings::add(NodeId id, std::span<const double> values) {
  if (values.size() != dim_) throw ConfigError("embedding width mismatch");
  auto [it, inserted] = index_.try_emplace(id, values_.size() / std::max<std::size_t>(dim_, 1));
  if (inserted) values_.resize(values_.size() + dim_);
  std::copy(values.begin(), values.end(), values_.begin() + static_cast<std::ptrdiff_t>(it->second * dim_));
}

std::span<const double> Embeddings::operator()(NodeId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw DataError("no embedding for pin " + std::to_string(id));
  return {values_.data() + it->second * dim_, dim_};
}

Embeddings embed_pins(std::span<const NodeId> ids, const ModelParams& params, const ModelConfig& cfg,
                      std::span<const int> graph_ids, const FeatureStore& features,
                      const NeighborTable& table, unsigned threads) {
  Tensor rows = Tensor::matrix(ids.size(), cfg.embed_dim);
  parallel_for(ids.size(), threads == 0 ? default_threads() : threads, [&](std::size_t i) {
    const PinContext ctx = build_context(ids[i], features, table, graph_ids, cfg);
    const Tensor e = variant_forward(ctx, params, cfg);
    std::copy(e.data(), e.data() + e.size(), rows.data() + i * cfg.embed_dim);
  });
  Embeddings out(cfg.embed_dim);
  for (std::size_t i = 0; i < ids.size(); ++i) out.add(ids[i], rows.row(i));
  return out;
}

std::vector<NodeId> sample_pool(std::span<const NodeId> catalog, std::size_t pool_size,
                                std::uint64_t seed) {
  std::vector<NodeId> ids(catalog.begin(), catalog.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const std::size_t take = std::min(pool_size, ids.size());
  std::mt19937_64 rng(derive_seed(seed, 0x706f6f6c));
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(take);
  return ids;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::size_t rank_of(std::span<const double> query, std::span<const double> engaged,
                    std::span<const std::span<const double>> pool) {
  const double target = dot(query, engaged);
  std::size_t ahead = 0;
  for (const auto& d : pool) ahead += dot(query, d) >= target ? 1 : 0;
  return ahead + 1;
}

namespace {

// Returns (rank, distractors considered).
std::pair<std::size_t, std::size_t> rank_pair(NodeId query, NodeId engaged,
                                              std::span<const NodeId> pool,
                                              const Embeddings& embed) {
  const auto q = embed(query);
  const double target = dot(q, embed(engaged));
  std::size_t ahead = 0, considered = 0;
  for (NodeId id : pool) {
    if (id == query || id == engaged) continue;
    ++considered;
    ahead += dot(q, embed(id)) >= target ? 1 : 0;
  }
  return {ahead + 1, considered};
}

}  // namespace

std::size_t rank_of(NodeId query, NodeId engaged, std::span<const NodeId> pool,
                    const Embeddings& embed) {
  return rank_pair(query, engaged, pool, embed).first;
}

EvalResult evaluate(std::span<const Pair> pairs, const Embeddings& embed,
                    std::span<const NodeId> pool, std::size_t k, unsigned threads) {
  if (pairs.empty()) throw DataError("eval: no pairs");
  if (k < 1) throw ConfigError("eval: k must be >= 1");
  EvalResult r;
  r.ranks.resize(pairs.size());
  std::vector<double> null_p(pairs.size());
  parallel_for(pairs.size(), threads == 0 ? default_threads() : threads, [&](std::size_t i) {
    const auto [rank, considered] = rank_pair(pairs[i].query, pairs[i].engaged, pool, embed);
    r.ranks[i] = rank;
    null_p[i] = std::min(1.0, static_cast<double>(k) / static_cast<double>(considered + 1));
  });
  double var = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    r.hits += r.ranks[i] <= k ? 1 : 0;
    r.null_recall += null_p[i];
    var += null_p[i] * (1.0 - null_p[i]);
  }
  const double n = static_cast<double>(pairs.size());
  r.recall = static_cast<double>(r.hits) / n;
  r.null_recall /= n;
  r.null_sigma = std::sqrt(var) / n;
  return r;
}

void dump_ranks(std::span<const Pair> pairs, const EvalResult& result, std::size_t k,
                const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << "query\tengaged\trank\thit\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    os << pairs[i].query << '\t' << pairs[i].engaged << '\t' << result.ranks[i] << '\t'
       << (result.ranks[i] <= k ? 1 : 0) << '\n';
  }
}

}  // namespace multibisage
