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

#include "multibisage/graph.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace multibisage {

namespace {

std::uint32_t intern(NodeId id, std::vector<NodeId>& ids,
                     std::unordered_map<NodeId, std::uint32_t>& lookup) {
  auto [it, inserted] =
      lookup.try_emplace(id, static_cast<std::uint32_t>(ids.size()));
  if (inserted) ids.push_back(id);
  return it->second;
}

// Builds CSR from per-node neighbor lists, sorting each by neighbor id.
void build_csr(std::vector<std::vector<std::uint32_t>>& lists,
               std::span<const NodeId> neighbor_ids,
               std::vector<std::size_t>& off, std::vector<std::uint32_t>& adj) {
  off.assign(lists.size() + 1, 0);
  for (std::size_t i = 0; i < lists.size(); ++i) {
    auto& l = lists[i];
    std::sort(l.begin(), l.end(), [&](std::uint32_t a, std::uint32_t b) {
      return neighbor_ids[a] < neighbor_ids[b];
    });
    off[i + 1] = off[i] + l.size();
  }
  adj.clear();
  adj.reserve(off.back());
  for (const auto& l : lists) adj.insert(adj.end(), l.begin(), l.end());
}

bool parse_u64(std::string_view s, NodeId& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

BipartiteGraph BipartiteGraph::from_edges(int graph_id,
                                          std::span<const Edge> edges,
                                          std::span<const NodeId> pin_order,
                                          std::span<const NodeId> ctx_order) {
  BipartiteGraph g;
  g.graph_id_ = graph_id;
  for (NodeId p : pin_order) intern(p, g.pin_ids_, g.pin_lookup_);
  for (NodeId c : ctx_order) intern(c, g.ctx_ids_, g.ctx_lookup_);

  std::vector<std::pair<std::uint32_t, std::uint32_t>> idx_edges;
  idx_edges.reserve(edges.size());
  for (const auto& [pin, ctx] : edges) {
    const auto pi = intern(pin, g.pin_ids_, g.pin_lookup_);
    const auto ci = intern(ctx, g.ctx_ids_, g.ctx_lookup_);
    idx_edges.emplace_back(pi, ci);
  }
  std::sort(idx_edges.begin(), idx_edges.end());
  idx_edges.erase(std::unique(idx_edges.begin(), idx_edges.end()),
                  idx_edges.end());

  std::vector<std::vector<std::uint32_t>> pin_lists(g.pin_ids_.size());
  std::vector<std::vector<std::uint32_t>> ctx_lists(g.ctx_ids_.size());
  for (const auto& [pi, ci] : idx_edges) {
    pin_lists[pi].push_back(ci);
    ctx_lists[ci].push_back(pi);
  }
  build_csr(pin_lists, g.ctx_ids_, g.pin_off_, g.pin_adj_);
  build_csr(ctx_lists, g.pin_ids_, g.ctx_off_, g.ctx_adj_);
  return g;
}

std::optional<std::uint32_t> BipartiteGraph::pin_index(NodeId id) const {
  auto it = pin_lookup_.find(id);
  if (it == pin_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> BipartiteGraph::ctx_index(NodeId id) const {
  auto it = ctx_lookup_.find(id);
  if (it == ctx_lookup_.end()) return std::nullopt;
  return it->second;
}

bool BipartiteGraph::has_edge(NodeId pin, NodeId ctx) const {
  auto pi = pin_index(pin);
  auto ci = ctx_index(ctx);
  if (!pi || !ci) return false;
  auto nbrs = pin_neighbors(*pi);
  return std::binary_search(
      nbrs.begin(), nbrs.end(), *ci,
      [&](std::uint32_t a, std::uint32_t b) { return ctx_ids_[a] < ctx_ids_[b]; });
}

std::vector<Edge> BipartiteGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count());
  for (std::uint32_t p = 0; p < num_pins(); ++p) {
    for (std::uint32_t c : pin_neighbors(p)) out.emplace_back(pin_ids_[p], ctx_ids_[c]);
  }
  return out;
}

void BipartiteGraph::validate() const {
  auto fail = [](const std::string& what) {
    throw DataError("graph invariant violated: " + what);
  };
  if (pin_off_.size() != num_pins() + 1 || ctx_off_.size() != num_ctx() + 1) {
    fail("offset table size");
  }
  std::size_t degree_sum = 0;
  for (std::uint32_t p = 0; p < num_pins(); ++p) {
    auto nbrs = pin_neighbors(p);
    degree_sum += nbrs.size();
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      if (nbrs[i] >= num_ctx()) fail("pin neighbor out of range");
      if (i > 0 && ctx_ids_[nbrs[i - 1]] >= ctx_ids_[nbrs[i]]) {
        fail("pin adjacency not strictly sorted");
      }
      auto back = ctx_neighbors(nbrs[i]);
      if (std::find(back.begin(), back.end(), p) == back.end()) {
        fail("asymmetric adjacency");
      }
    }
  }
  for (std::uint32_t c = 0; c < num_ctx(); ++c) {
    auto nbrs = ctx_neighbors(c);
    degree_sum += nbrs.size();
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      if (nbrs[i] >= num_pins()) fail("ctx neighbor out of range");
      if (i > 0 && pin_ids_[nbrs[i - 1]] >= pin_ids_[nbrs[i]]) {
        fail("ctx adjacency not strictly sorted");
      }
      auto back = pin_neighbors(nbrs[i]);
      if (std::find(back.begin(), back.end(), c) == back.end()) {
        fail("asymmetric adjacency");
      }
    }
  }
  if (degree_sum != 2 * edge_count()) fail("edge count != half degree sum");
}

BipartiteGraph load_edges(const std::string& path, int graph_id) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge file: " + path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    NodeId pin = 0;
    NodeId ctx = 0;
    if (tab == std::string::npos ||
        !parse_u64(std::string_view(line).substr(0, tab), pin) ||
        !parse_u64(std::string_view(line).substr(tab + 1), ctx)) {
      throw ParseError(path, line_no, "expected pin_id<TAB>ctx_id, got '" + line + "'");
    }
    edges.emplace_back(pin, ctx);
  }
  if (edges.empty()) throw DataError("empty graph: " + path);
  return BipartiteGraph::from_edges(graph_id, edges);
}

void save_edges(const BipartiteGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write edge file: " + path);
  for (const auto& [pin, ctx] : g.edges()) out << pin << '\t' << ctx << '\n';
  if (!out) throw DataError("write failed: " + path);
}

void PruneConfig::validate() const {
  if (min_degree < 1) throw ConfigError("prune: min degree a must be >= 1");
  if (max_degree < min_degree) throw ConfigError("prune: requires a <= b");
  if (!(prune_factor >= 0.0 && prune_factor <= 1.0)) {
    throw ConfigError("prune: prune factor p must lie in [0, 1]");
  }
}

std::size_t PruneConfig::target_degree(std::size_t current_degree) const {
  const double base = rule == PruneRule::kMinDegreeScaled
                          ? static_cast<double>(min_degree)
                          : static_cast<double>(current_degree);
  const double t = std::min(base * prune_factor, static_cast<double>(max_degree));
  return std::min(current_degree, static_cast<std::size_t>(std::floor(t)));
}

PruneResult degree_prune_with_report(const BipartiteGraph& g,
                                     const PruneConfig& cfg) {
  cfg.validate();
  // Mutable adjacency by dense index; kept sorted by neighbor id so the
  // sampled subsets depend only on (graph, seed).
  std::vector<std::vector<std::uint32_t>> pin_adj(g.num_pins());
  std::vector<std::vector<std::uint32_t>> ctx_adj(g.num_ctx());
  for (std::uint32_t p = 0; p < g.num_pins(); ++p) {
    auto n = g.pin_neighbors(p);
    pin_adj[p].assign(n.begin(), n.end());
  }
  for (std::uint32_t c = 0; c < g.num_ctx(); ++c) {
    auto n = g.ctx_neighbors(c);
    ctx_adj[c].assign(n.begin(), n.end());
  }

  auto order_by_id = [](std::span<const NodeId> ids) {
    std::vector<std::uint32_t> order(ids.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::uint32_t a, std::uint32_t b) { return ids[a] < ids[b]; });
    return order;
  };

  std::mt19937_64 rng(mix64(cfg.seed));
  PruneResult result;

  auto visit = [&](Side side, std::uint32_t u,
                   std::vector<std::vector<std::uint32_t>>& own,
                   std::vector<std::vector<std::uint32_t>>& other) {
    auto& nbrs = own[u];
    const std::size_t deg = nbrs.size();
    if (deg <= cfg.min_degree) return;
    const std::size_t target = cfg.target_degree(deg);
    const std::size_t remove = deg - target;
    // Partial Fisher-Yates: the first `remove` slots become the removed set.
    std::vector<std::uint32_t> pick = nbrs;
    for (std::size_t i = 0; i < remove; ++i) {
      std::uniform_int_distribution<std::size_t> dist(i, deg - 1);
      std::swap(pick[i], pick[dist(rng)]);
    }
    for (std::size_t i = 0; i < remove; ++i) {
      const std::uint32_t v = pick[i];
      nbrs.erase(std::find(nbrs.begin(), nbrs.end(), v));
      auto& back = other[v];
      back.erase(std::find(back.begin(), back.end(), u));
    }
    const NodeId id = side == Side::kPin ? g.pin_ids()[u] : g.ctx_ids()[u];
    result.pruned.push_back({side, id, deg, nbrs.size()});
  };

  for (std::uint32_t p : order_by_id(g.pin_ids())) visit(Side::kPin, p, pin_adj, ctx_adj);
  for (std::uint32_t c : order_by_id(g.ctx_ids())) visit(Side::kCtx, c, ctx_adj, pin_adj);

  std::vector<Edge> kept;
  for (std::uint32_t p = 0; p < g.num_pins(); ++p) {
    for (std::uint32_t c : pin_adj[p]) kept.emplace_back(g.pin_ids()[p], g.ctx_ids()[c]);
  }
  result.graph =
      BipartiteGraph::from_edges(g.graph_id(), kept, g.pin_ids(), g.ctx_ids());
  return result;
}

PruneConfig parse_prune_spec(const std::string& spec, std::uint64_t seed) {
  std::stringstream ss(spec);
  std::string a, b, p;
  if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') ||
      !std::getline(ss, p, ',')) {
    throw ConfigError("--prune expects a,b,p; got '" + spec + "'");
  }
  PruneConfig cfg;
  try {
    cfg.min_degree = std::stoull(a);
    cfg.max_degree = std::stoull(b);
    cfg.prune_factor = std::stod(p);
  } catch (const std::exception&) {
    throw ConfigError("--prune expects a,b,p; got '" + spec + "'");
  }
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

}  // namespace multibisage
