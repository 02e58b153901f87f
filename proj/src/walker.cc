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

#include "multibisage/walker.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace multibisage {

void WalkConfig::validate() const {
  if (nw < 1) throw ConfigError("walk: nw must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("walk: alpha must lie in (0, 1]");
  if (top_k < 1) throw ConfigError("walk: top_k must be >= 1");
}

void NeighborTable::set(int graph_id, NodeId pin, std::vector<Neighbor> neighbors) {
  lists_[{graph_id, pin}] = std::move(neighbors);
}

std::span<const Neighbor> NeighborTable::neighbors(int graph_id, NodeId pin) const {
  auto it = lists_.find({graph_id, pin});
  if (it == lists_.end()) return {};
  return it->second;
}

bool NeighborTable::contains(int graph_id, NodeId pin) const {
  return lists_.count({graph_id, pin}) > 0;
}

std::vector<int> NeighborTable::graph_ids() const {
  std::vector<int> ids;
  for (const auto& [key, _] : lists_) {
    if (ids.empty() || ids.back() != key.first) ids.push_back(key.first);
  }
  return ids;
}

void NeighborTable::merge(const NeighborTable& other) {
  for (const auto& [key, list] : other.lists_) lists_[key] = list;
}

namespace {

std::vector<Neighbor> walk_from(const BipartiteGraph& g, std::uint32_t start,
                                const WalkConfig& cfg) {
  if (g.pin_degree(start) == 0) return {};
  thread_local std::vector<std::uint64_t> visits;
  thread_local std::vector<std::uint32_t> touched;
  visits.assign(g.num_pins(), 0);
  touched.clear();

  std::mt19937_64 rng(derive_seed(cfg.seed, g.pin_ids()[start],
                                  static_cast<std::uint64_t>(g.graph_id())));
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  for (std::size_t seg = 0; seg < cfg.nw; ++seg) {
    std::uint32_t node = start;
    bool on_pin = true;
    for (;;) {
      auto nbrs = on_pin ? g.pin_neighbors(node) : g.ctx_neighbors(node);
      std::uniform_int_distribution<std::size_t> pick(0, nbrs.size() - 1);
      node = nbrs[pick(rng)];
      on_pin = !on_pin;
      if (on_pin && node != start) {
        if (visits[node]++ == 0) touched.push_back(node);
      }
      if (coin(rng) < cfg.alpha) break;
    }
  }

  std::vector<Neighbor> out;
  out.reserve(touched.size());
  for (std::uint32_t p : touched) out.push_back({g.pin_ids()[p], visits[p]});
  auto by_rank = [](const Neighbor& a, const Neighbor& b) {
    return a.visits != b.visits ? a.visits > b.visits : a.id < b.id;
  };
  if (out.size() > cfg.top_k) {
    std::partial_sort(out.begin(), out.begin() + cfg.top_k, out.end(), by_rank);
    out.resize(cfg.top_k);
  } else {
    std::sort(out.begin(), out.end(), by_rank);
  }
  return out;
}

}  // namespace

NeighborTable run_walks(const BipartiteGraph& g, std::span<const NodeId> starts,
                        const WalkConfig& cfg) {
  cfg.validate();
  std::vector<std::uint32_t> idx(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    auto pi = g.pin_index(starts[i]);
    if (!pi) throw DataError("walk: unknown start pin " + std::to_string(starts[i]));
    idx[i] = *pi;
  }
  std::vector<std::vector<Neighbor>> lists(starts.size());
  parallel_for(starts.size(), cfg.threads,
               [&](std::size_t i) { lists[i] = walk_from(g, idx[i], cfg); });
  NeighborTable table;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    table.set(g.graph_id(), starts[i], std::move(lists[i]));
  }
  return table;
}

std::map<NodeId, double> exact_visit_distribution(const BipartiteGraph& g,
                                                  NodeId pin, double alpha,
                                                  double tol) {
  if (!(tol > 0.0)) throw ConfigError("exact_visit_distribution: tol must be > 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ConfigError("exact_visit_distribution: alpha must lie in (0, 1]");
  }
  auto start = g.pin_index(pin);
  if (!start) throw DataError("unknown pin " + std::to_string(pin));
  std::map<NodeId, double> result;
  if (g.pin_degree(*start) == 0) return result;

  std::vector<double> pin_mass(g.num_pins(), 0.0);
  std::vector<double> ctx_mass(g.num_ctx(), 0.0);
  std::vector<double> expected(g.num_pins(), 0.0);
  pin_mass[*start] = 1.0;
  double survival = 1.0;  // probability that hop t happens
  for (std::size_t t = 1;; ++t) {
    if (t % 2 == 1) {
      std::fill(ctx_mass.begin(), ctx_mass.end(), 0.0);
      for (std::uint32_t p = 0; p < g.num_pins(); ++p) {
        if (pin_mass[p] == 0.0) continue;
        const double share = pin_mass[p] / static_cast<double>(g.pin_degree(p));
        for (std::uint32_t c : g.pin_neighbors(p)) ctx_mass[c] += share;
      }
    } else {
      std::fill(pin_mass.begin(), pin_mass.end(), 0.0);
      for (std::uint32_t c = 0; c < g.num_ctx(); ++c) {
        if (ctx_mass[c] == 0.0) continue;
        const double share = ctx_mass[c] / static_cast<double>(g.ctx_degree(c));
        for (std::uint32_t p : g.ctx_neighbors(c)) pin_mass[p] += share;
      }
      for (std::uint32_t p = 0; p < g.num_pins(); ++p) {
        if (p != *start) expected[p] += survival * pin_mass[p];
      }
    }
    survival *= 1.0 - alpha;
    // Remaining mass of hops t+1, t+2, ... is at most survival / alpha.
    if (survival / alpha < tol) break;
  }
  for (std::uint32_t p = 0; p < g.num_pins(); ++p) {
    if (expected[p] > 0.0) result[g.pin_ids()[p]] = expected[p];
  }
  return result;
}

void save_neighbor_table(const NeighborTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write neighbor table: " + path);
  for (const auto& [key, list] : table.entries()) {
    for (std::size_t r = 0; r < list.size(); ++r) {
      out << key.second << '\t' << key.first << '\t' << (r + 1) << '\t'
          << list[r].id << '\t' << list[r].visits << '\n';
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

NeighborTable load_neighbor_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open neighbor table: " + path);
  std::map<NeighborTable::Key, std::vector<Neighbor>> lists;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    NodeId pin = 0, nbr = 0;
    int graph = 0;
    std::size_t rank = 0;
    std::uint64_t visits = 0;
    std::string rest;
    if (!(ss >> pin >> graph >> rank >> nbr >> visits) || (ss >> rest)) {
      throw ParseError(path, line_no, "malformed neighbor row");
    }
    auto& list = lists[{graph, pin}];
    if (rank != list.size() + 1) throw ParseError(path, line_no, "rank out of sequence");
    list.push_back({nbr, visits});
  }
  NeighborTable table;
  for (auto& [key, list] : lists) table.set(key.first, key.second, std::move(list));
  return table;
}

}  // namespace multibisage
