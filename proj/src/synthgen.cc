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

#include "multibisage/synthgen.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace multibisage {

void SynthConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (num_pins < 2 || num_ctx < 1) throw ConfigError("synth: need >= 2 pins and >= 1 ctx node");
  if (clusters < 1 || clusters > num_pins) throw ConfigError("synth: clusters must lie in [1, num_pins]");
  if (!prob(intra_edge_prob) || !prob(inter_edge_noise) || !prob(pair_noise)) {
    throw ConfigError("synth: probabilities must lie in [0, 1]");
  }
  if (!(feature_noise >= 0.0)) throw ConfigError("synth: feature_noise must be >= 0");
  if (visual_dim < 1 || text_dim < 1) throw ConfigError("synth: feature widths must be >= 1");
  if (informativeness.empty()) throw ConfigError("synth: need at least one graph");
  for (double v : informativeness) {
    if (!prob(v)) throw ConfigError("synth: informativeness must lie in [0, 1]");
  }
  if (pair_count < 2) throw ConfigError("synth: pair_count must be >= 2");
}

namespace {

NodeId pin_id(std::size_t i) { return static_cast<NodeId>(i + 1); }

// Indices in [0, n) kept independently with probability p, via geometric skips.
template <class F>
void bernoulli_subset(std::size_t n, double p, std::mt19937_64& rng, F&& keep) {
  if (p <= 0.0 || n == 0) return;
  if (p >= 1.0) {
    for (std::size_t i = 0; i < n; ++i) keep(i);
    return;
  }
  std::geometric_distribution<std::size_t> skip(p);
  for (std::size_t i = skip(rng); i < n; i += 1 + skip(rng)) keep(i);
}

std::vector<double> unit_direction(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(dim);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (double& x : v) {
      x = normal(rng);
      n2 += x * x;
    }
  } while (n2 < 1e-12);
  for (double& x : v) x /= std::sqrt(n2);
  return v;
}

}  // namespace

Corpus gen_corpus(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t np = cfg.num_pins, nc = cfg.num_ctx, C = cfg.clusters, k = cfg.num_graphs();
  Corpus out;

  std::mt19937_64 rng(derive_seed(cfg.seed, 0x636c7573));
  std::uniform_int_distribution<std::uint32_t> cluster_of(0, static_cast<std::uint32_t>(C - 1));
  out.pin_cluster.resize(np);
  for (auto& c : out.pin_cluster) c = cluster_of(rng);
  std::vector<std::vector<std::uint32_t>> pins_in(C);
  for (std::size_t i = 0; i < np; ++i) pins_in[out.pin_cluster[i]].push_back(static_cast<std::uint32_t>(i));

  // Edges, one independent stream per graph.
  for (std::size_t g = 0; g < k; ++g) {
    std::mt19937_64 grng(derive_seed(cfg.seed, 0x65646765, g));
    std::vector<std::uint32_t> ctx_cluster(nc);
    for (auto& c : ctx_cluster) c = cluster_of(grng);
    std::vector<std::vector<std::uint32_t>> ctx_in(C);
    for (std::size_t c = 0; c < nc; ++c) ctx_in[ctx_cluster[c]].push_back(static_cast<std::uint32_t>(c));

    const double inf = cfg.informativeness[g];
    const double p_same = inf * cfg.intra_edge_prob + (1.0 - inf) * cfg.inter_edge_noise;
    std::vector<Edge> edges;
    std::vector<std::uint32_t> picked;
    for (std::size_t i = 0; i < np; ++i) {
      picked.clear();
      const std::uint32_t own = out.pin_cluster[i];
      const auto& same = ctx_in[own];
      bernoulli_subset(same.size(), p_same, grng, [&](std::size_t j) { picked.push_back(same[j]); });
      // Cross-cluster candidates: every ctx node outside `own`, in index order.
      std::vector<std::uint32_t> other;
      bernoulli_subset(nc - same.size(), cfg.inter_edge_noise, grng,
                       [&](std::size_t j) { other.push_back(static_cast<std::uint32_t>(j)); });
      if (!other.empty()) {
        std::size_t seen = 0, oi = 0;
        for (std::uint32_t c = 0; c < nc && oi < other.size(); ++c) {
          if (ctx_cluster[c] == own) continue;
          if (seen++ == other[oi]) {
            picked.push_back(c);
            ++oi;
          }
        }
      }
      std::sort(picked.begin(), picked.end());
      for (std::uint32_t c : picked) edges.emplace_back(pin_id(i), static_cast<NodeId>(c + 1));
    }
    if (edges.empty()) throw ConfigError("synth: graph " + std::to_string(g) + " has no edges (empty graph)");
    std::vector<NodeId> pin_order(np);
    for (std::size_t i = 0; i < np; ++i) pin_order[i] = pin_id(i);
    out.graphs.push_back(BipartiteGraph::from_edges(static_cast<int>(g), edges, pin_order));
    out.ctx_cluster.push_back(std::move(ctx_cluster));
  }

  // Features.
  {
    std::mt19937_64 frng(derive_seed(cfg.seed, 0x66656174));
    std::vector<std::vector<double>> cv(C), ct(C);
    for (std::size_t c = 0; c < C; ++c) {
      cv[c] = unit_direction(cfg.visual_dim, frng);
      ct[c] = unit_direction(cfg.text_dim, frng);
    }
    std::normal_distribution<double> noise(0.0, cfg.feature_noise);
    out.features = FeatureStore(cfg.visual_dim, cfg.text_dim);
    std::vector<double> v(cfg.visual_dim), t(cfg.text_dim);
    for (std::size_t i = 0; i < np; ++i) {
      const std::uint32_t c = out.pin_cluster[i];
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = cv[c][j] + (cfg.feature_noise > 0 ? noise(frng) : 0.0);
      for (std::size_t j = 0; j < t.size(); ++j) t[j] = ct[c][j] + (cfg.feature_noise > 0 ? noise(frng) : 0.0);
      out.features.set(pin_id(i), v, t);
    }
  }

  // Pairs.
  std::mt19937_64 prng(derive_seed(cfg.seed, 0x70616972));
  std::vector<double> weights(cfg.informativeness);
  if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0) weights.assign(k, 1.0);
  std::uniform_int_distribution<std::size_t> pick_pin(0, np - 1);
  std::bernoulli_distribution noisy(cfg.pair_noise);
  auto uniform_from = [&](const std::vector<std::uint32_t>& xs) {
    return xs[std::uniform_int_distribution<std::size_t>(0, xs.size() - 1)(prng)];
  };

  // partners[g][ctx index]: same-cluster pins on a context node, so a query
  // can be matched with a co-occurring pin of its own cluster.
  auto cluster_of_ctx = [&](std::size_t g, std::uint32_t c) {
    return out.ctx_cluster[g][out.graphs[g].ctx_ids()[c] - 1];
  };
  auto co_occurring = [&](std::size_t g, std::uint32_t c, std::size_t q, std::vector<std::uint32_t>& dst) {
    const BipartiteGraph& graph = out.graphs[g];
    dst.clear();
    for (std::uint32_t p : graph.ctx_neighbors(c)) {
      const std::size_t pid = graph.pin_ids()[p] - 1;
      if (pid != q && out.pin_cluster[pid] == out.pin_cluster[q]) dst.push_back(static_cast<std::uint32_t>(pid));
    }
  };
  std::vector<std::uint32_t> cands;
  // Queries without any same-cluster co-occurrence are redrawn, unless no
  // pin has one, in which case engaged pins come uniformly from the cluster.
  bool any_cooccurrence = false;
  for (std::size_t g = 0; g < k && !any_cooccurrence; ++g) {
    if (weights[g] <= 0.0) continue;
    const BipartiteGraph& graph = out.graphs[g];
    for (std::uint32_t c = 0; c < graph.num_ctx() && !any_cooccurrence; ++c) {
      for (std::uint32_t p : graph.ctx_neighbors(c)) {
        const std::size_t pid = graph.pin_ids()[p] - 1;
        if (out.pin_cluster[pid] != cluster_of_ctx(g, c)) continue;
        co_occurring(g, c, pid, cands);
        if (!cands.empty()) {
          any_cooccurrence = true;
          break;
        }
      }
    }
  }

  std::set<std::pair<NodeId, NodeId>> seen;
  std::vector<Pair> pairs;
  const std::size_t max_attempts = cfg.pair_count * 50;
  for (std::size_t attempt = 0; pairs.size() < cfg.pair_count && attempt < max_attempts; ++attempt) {
    const std::size_t q = pick_pin(prng);
    const std::uint32_t cq = out.pin_cluster[q];
    std::size_t e = q;
    if (noisy(prng)) {
      // Noise pair: a pin of another cluster, or any other pin when C = 1.
      if (C > 1) {
        std::uint32_t other = cluster_of(prng);
        while (other == cq) other = cluster_of(prng);
        if (pins_in[other].empty()) continue;
        e = uniform_from(pins_in[other]);
      } else {
        while (e == q) e = pick_pin(prng);
      }
    } else if (any_cooccurrence) {
      // Draw a graph by weight among those where q shares a same-cluster
      // context node with another pin of its cluster, then one such node,
      // then one of those pins.
      std::vector<double> w = weights;
      std::vector<std::vector<std::uint32_t>> ctx_of(k);
      for (std::size_t g = 0; g < k; ++g) {
        const BipartiteGraph& graph = out.graphs[g];
        const auto qi = *graph.pin_index(pin_id(q));
        for (std::uint32_t c : graph.pin_neighbors(qi)) {
          if (cluster_of_ctx(g, c) != cq) continue;
          co_occurring(g, c, q, cands);
          if (!cands.empty()) ctx_of[g].push_back(c);
        }
        if (ctx_of[g].empty()) w[g] = 0.0;
      }
      if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) continue;
      const std::size_t gi = std::discrete_distribution<std::size_t>(w.begin(), w.end())(prng);
      co_occurring(gi, uniform_from(ctx_of[gi]), q, cands);
      e = uniform_from(cands);
    } else {
      if (pins_in[cq].size() < 2) continue;
      while (e == q) e = uniform_from(pins_in[cq]);
    }
    if (seen.emplace(pin_id(q), pin_id(e)).second) pairs.push_back({pin_id(q), pin_id(e)});
  }
  if (pairs.size() < 2) throw ConfigError("synth: could not draw enough distinct pairs");

  std::shuffle(pairs.begin(), pairs.end(), prng);
  const std::size_t n_test = std::max<std::size_t>(1, pairs.size() / 10);
  out.test_pairs.assign(pairs.end() - static_cast<std::ptrdiff_t>(n_test), pairs.end());
  out.train_pairs.assign(pairs.begin(), pairs.end() - static_cast<std::ptrdiff_t>(n_test));
  return out;
}

void save_pairs(const std::vector<Pair>& pairs, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  for (const Pair& p : pairs) os << p.query << '\t' << p.engaged << '\n';
  if (!os) throw DataError("write failed: " + path);
}

std::vector<Pair> load_pairs(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  std::vector<Pair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    Pair p{};
    const char* end = line.data() + line.size();
    if (tab == std::string::npos ||
        std::from_chars(line.data(), line.data() + tab, p.query).ptr != line.data() + tab ||
        std::from_chars(line.data() + tab + 1, end, p.engaged).ptr != end || tab + 1 == line.size()) {
      throw ParseError(path, lineno, "expected query_id<TAB>engaged_id");
    }
    out.push_back(p);
  }
  if (out.empty()) throw DataError("no pairs in " + path);
  return out;
}

void write_corpus(const Corpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const BipartiteGraph& g : corpus.graphs) {
    save_edges(g, dir + "/graph_" + std::to_string(g.graph_id()) + ".tsv");
  }
  save_features(corpus.features, dir + "/features.bin");
  save_pairs(corpus.train_pairs, dir + "/train_pairs.tsv");
  save_pairs(corpus.test_pairs, dir + "/test_pairs.tsv");
}

}  // namespace multibisage
