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

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria. Results are also written to
// acceptance_results.txt in the working directory. Criterion numbers given
// as arguments restrict the run to those criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "multibisage/config.h"
#include "multibisage/eval.h"
#include "multibisage/graph.h"
#include "multibisage/loss.h"
#include "multibisage/model.h"
#include "multibisage/ops.h"
#include "multibisage/pipeline.h"
#include "multibisage/sketch.h"
#include "multibisage/synthgen.h"
#include "multibisage/trainer.h"
#include "multibisage/walker.h"
#include "test_support.h"

namespace mb = multibisage;
namespace mt = multibisage::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1 and 2

struct RecallRuns {
  std::vector<double> all, single[3];
  double worst_seconds = 0.0;
};

RecallRuns recall_runs(const std::filesystem::path& root) {
  RecallRuns out;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    mb::PipelineConfig cfg = mb::preset("desk");
    cfg.seed = seed;
    cfg.finalize();
    const auto t0 = std::chrono::steady_clock::now();
    const auto all = mb::run_pipeline(cfg, (root / ("seed" + std::to_string(seed) + "_all")).string());
    out.worst_seconds = std::max(out.worst_seconds, seconds_since(t0));
    out.all.push_back(all.recall);
    const auto rows =
        mb::run_ablation(cfg, {{0}, {1}, {2}}, (root / ("seed" + std::to_string(seed) + "_single")).string());
    for (int g = 0; g < 3; ++g) out.single[g].push_back(rows[g].second.recall);
    std::cerr << "seed " << seed << ": all " << all.recall << ", singles " << rows[0].second.recall << ' '
              << rows[1].second.recall << ' ' << rows[2].second.recall << '\n';
  }
  return out;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

Outcome criterion_recall(const RecallRuns& r) {
  Outcome o;
  const double all = mean(r.all), g0 = mean(r.single[0]);
  o.detail << "mean recall@10 all=" << all << " graph0=" << g0 << " delta=" << all - g0
           << " slowest all-graph pipeline " << r.worst_seconds << "s on " << mb::default_threads()
           << " thread(s) ";
  o.require(all >= 0.5, "all-graph recall >= 0.5");
  o.require(all - g0 >= 0.02, "all minus graph 0 >= 0.02");
  o.require(r.worst_seconds <= 600.0, "pipeline runtime <= 600 s");
  return o;
}

Outcome criterion_single_graph(const RecallRuns& r) {
  Outcome o;
  for (std::size_t s = 0; s < r.all.size(); ++s) {
    o.detail << "seed" << s << ": all=" << r.all[s];
    for (int g = 0; g < 3; ++g) {
      o.detail << " g" << g << "=" << r.single[g][s];
      o.require(r.single[g][s] <= r.all[s], "graph " + std::to_string(g) + " <= all on seed " + std::to_string(s));
    }
    o.detail << "; ";
  }
  return o;
}

// ---------------------------------------------------------------- 3

// The oracle gives expected visits per walk segment; the empirical side is
// visits / nw. The distance is half the L1 gap between those measures. The
// gap between the normalized distributions is reported alongside.
Outcome criterion_walker() {
  Outcome o;
  double worst_tv = 0.0, worst_normalized = 0.0;
  std::size_t checks = 0;
  for (std::uint64_t gi = 0; gi < 5; ++gi) {
    std::mt19937_64 rng(100 + gi);
    const std::size_t pins = 10 + rng() % 41, ctx = 10 + rng() % 41;
    const mb::BipartiteGraph g = mt::random_graph(pins, ctx, 0.12, 200 + gi);
    for (double alpha : {0.5, 0.9}) {
      mb::WalkConfig wc;
      wc.nw = 200000;
      wc.alpha = alpha;
      wc.top_k = pins;
      wc.seed = gi;
      wc.threads = 1;
      const auto table = mb::run_walks(g, g.pin_ids(), wc);
      wc.threads = 8;
      o.require(mb::run_walks(g, g.pin_ids(), wc) == table, "1 vs 8 workers identical");
      for (mb::NodeId pin : g.pin_ids()) {
        const auto exact = mb::exact_visit_distribution(g, pin, alpha, 1e-14);
        std::map<mb::NodeId, double> emp;
        for (const auto& n : table.neighbors(0, pin)) {
          emp[n.id] = static_cast<double>(n.visits) / static_cast<double>(wc.nw);
        }
        double exact_mass = 0.0, emp_mass = 0.0;
        std::set<mb::NodeId> ids;
        for (const auto& [id, v] : exact) ids.insert(id), exact_mass += v;
        for (const auto& [id, v] : emp) ids.insert(id), emp_mass += v;
        double tv = 0.0, normalized = 0.0;
        for (mb::NodeId id : ids) {
          const double pe = exact.contains(id) ? exact.at(id) : 0.0;
          const double pm = emp.contains(id) ? emp.at(id) : 0.0;
          tv += 0.5 * std::abs(pe - pm);
          if (exact_mass > 0.0 && emp_mass > 0.0) normalized += 0.5 * std::abs(pe / exact_mass - pm / emp_mass);
        }
        worst_tv = std::max(worst_tv, tv);
        worst_normalized = std::max(worst_normalized, normalized);
        ++checks;
      }
    }
  }
  o.detail << "worst TV distance " << worst_tv << " over " << checks
           << " (graph, alpha, start pin) checks; normalized distributions: worst " << worst_normalized << ' ';
  o.require(worst_tv <= 0.01, "TV <= 0.01");
  return o;
}

// ---------------------------------------------------------------- 4

Outcome criterion_pruning() {
  Outcome o;
  std::size_t pruned_nodes = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    std::mt19937_64 rng(7000 + t);
    const std::size_t pins = 20 + rng() % 60, ctx = 5 + rng() % 30;
    const mb::BipartiteGraph g = mt::random_graph(pins, ctx, 0.05 + 0.4 * (rng() % 100) / 100.0, t);
    mb::PruneConfig cfg;
    cfg.min_degree = 1 + rng() % 10;
    cfg.max_degree = cfg.min_degree + rng() % 12;
    cfg.prune_factor = 0.2 + 0.8 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    cfg.seed = rng();
    const auto result = mb::degree_prune_with_report(g, cfg);
    const std::size_t target = static_cast<std::size_t>(
        std::floor(std::min(static_cast<double>(cfg.min_degree) * cfg.prune_factor, static_cast<double>(cfg.max_degree))));
    for (const auto& p : result.pruned) {
      ++pruned_nodes;
      o.require(p.degree_before > cfg.min_degree, "only nodes above a are pruned");
      o.require(p.degree_after == target, "post-prune degree equals floor(min(a*p, b))");
    }
    for (const auto& [pin, c] : result.graph.edges()) o.require(g.has_edge(pin, c), "pruned edges are a subset");
    o.require(mb::degree_prune_with_report(g, cfg).graph.edges() == result.graph.edges(), "seed determinism");
    if (!o.pass) {
      o.detail << "graph " << t << ' ';
      break;
    }
  }
  o.detail << "100 graphs, " << pruned_nodes << " directly pruned nodes checked ";
  return o;
}

// ---------------------------------------------------------------- 5

struct Packer {
  std::vector<mb::Tensor*> parts;
  std::vector<double> flat() const {
    std::vector<double> out;
    for (auto* t : parts) out.insert(out.end(), t->values().begin(), t->values().end());
    return out;
  }
  void load(std::span<const double> w) {
    std::size_t i = 0;
    for (auto* t : parts) {
      for (double& v : t->values()) v = w[i++];
    }
  }
};

void append(std::vector<double>& g, const mb::Tensor& t) { g.insert(g.end(), t.values().begin(), t.values().end()); }

double readout(const mb::Tensor& y, const mb::Tensor& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * c[i];
  return s;
}

std::map<std::string, double> op_checks() {
  std::mt19937_64 rng(5);
  std::map<std::string, double> err;
  {
    auto x = mt::random_tensor({3, 4}, rng), w = mt::random_tensor({4, 5}, rng), b = mt::random_tensor({1, 5}, rng);
    auto c = mt::random_tensor({3, 5}, rng);
    Packer pk{{&x, &w, &b}};
    err["ffn"] = mb::grad_check(
        [&](std::span<const double> v, std::vector<double>* g) {
          pk.load(v);
          auto y = mb::ffn_forward(x, w, b);
          if (g) {
            mb::Tensor dx, dw = w.zeros_like(), db = b.zeros_like();
            mb::ffn_backward(x, w, y, c, &dx, dw, db);
            g->clear();
            append(*g, dx), append(*g, dw), append(*g, db);
          }
          return readout(y, c);
        },
        pk.flat());
    err["linear"] = mb::grad_check(
        [&](std::span<const double> v, std::vector<double>* g) {
          pk.load(v);
          auto y = mb::linear_forward(x, w, b);
          if (g) {
            mb::Tensor dx, dw = w.zeros_like(), db = b.zeros_like();
            mb::linear_backward(x, w, c, &dx, dw, db);
            g->clear();
            append(*g, dx), append(*g, dw), append(*g, db);
          }
          return readout(y, c);
        },
        pk.flat());
  }
  {
    auto q = mt::random_tensor({2, 3}, rng), k = mt::random_tensor({5, 3}, rng), v = mt::random_tensor({5, 4}, rng);
    auto c = mt::random_tensor({2, 4}, rng);
    const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1};
    Packer pk{{&q, &k, &v}};
    err["attention"] = mb::grad_check(
        [&](std::span<const double> vals, std::vector<double>* g) {
          pk.load(vals);
          mb::Tensor weights;
          auto y = mb::attention(q, k, v, mask, &weights);
          if (g) {
            mb::Tensor dq, dk, dv;
            mb::attention_backward(q, k, v, weights, c, dq, dk, dv);
            g->clear();
            append(*g, dq), append(*g, dk), append(*g, dv);
          }
          return readout(y, c);
        },
        pk.flat());
  }
  {
    const std::size_t d = 8;
    mb::AttentionParams p{2, mt::random_tensor({d, d}, rng, 0.5), mt::random_tensor({d, d}, rng, 0.5),
                          mt::random_tensor({d, d}, rng, 0.5), mt::random_tensor({d, d}, rng, 0.5)};
    auto xq = mt::random_tensor({1, d}, rng), xkv = mt::random_tensor({4, d}, rng);
    auto c = mt::random_tensor({1, d}, rng);
    Packer pk{{&xq, &xkv, &p.wq, &p.wk, &p.wv, &p.wo}};
    err["multihead"] = mb::grad_check(
        [&](std::span<const double> vals, std::vector<double>* g) {
          pk.load(vals);
          mb::MultiheadCache cache;
          auto y = mb::multihead(xq, xkv, p, {}, &cache);
          if (g) {
            mb::Tensor dxq, dxkv;
            auto grads = p.zeros_like();
            mb::multihead_backward(cache, p, c, dxq, dxkv, grads);
            g->clear();
            for (const mb::Tensor* t : {&dxq, &dxkv, &grads.wq, &grads.wk, &grads.wv, &grads.wo}) append(*g, *t);
          }
          return readout(y, c);
        },
        pk.flat());
  }
  {
    auto x = mt::random_tensor({1, 6}, rng), c = mt::random_tensor({1, 6}, rng);
    Packer pk{{&x}};
    err["l2_normalize"] = mb::grad_check(
        [&](std::span<const double> vals, std::vector<double>* g) {
          pk.load(vals);
          auto y = mb::l2_normalize(x);
          if (g) {
            auto dx = mb::l2_normalize_backward(x, y, c);
            g->assign(dx.values().begin(), dx.values().end());
          }
          return readout(y, c);
        },
        pk.flat());
  }
  {
    auto x = mt::random_tensor({3, 6}, rng), gain = mt::random_tensor({1, 6}, rng), bias = mt::random_tensor({1, 6}, rng);
    auto c = mt::random_tensor({3, 6}, rng);
    Packer pk{{&x, &gain, &bias}};
    err["layer_norm"] = mb::grad_check(
        [&](std::span<const double> vals, std::vector<double>* g) {
          pk.load(vals);
          mb::LayerNormCache cache;
          auto y = mb::layer_norm(x, gain, bias, &cache);
          if (g) {
            mb::Tensor dx, dg = gain.zeros_like(), db = bias.zeros_like();
            mb::layer_norm_backward(cache, gain, c, dx, dg, db);
            g->clear();
            append(*g, dx), append(*g, dg), append(*g, db);
          }
          return readout(y, c);
        },
        pk.flat());
  }
  return err;
}

Outcome criterion_gradients() {
  Outcome o;
  double worst_model = 0.0;
  std::string worst_name;
  for (mb::Variant v : mb::all_variants()) {
    for (mb::EncoderMode m : {mb::EncoderMode::kAttentionOnly, mb::EncoderMode::kFullBlock}) {
      mb::ModelConfig cfg = mt::toy_config(v, m);
      cfg.logit_scale = 3.0;
      std::mt19937_64 rng(4);
      mb::Batch batch;
      mb::CountMinSketch positives, negatives;
      mb::NodeId id = 1;
      for (int i = 0; i < 3; ++i) {
        batch.queries.push_back(mt::random_context(cfg, rng, id++, {1, 2}));
        batch.positives.push_back(mt::random_context(cfg, rng, id++, {2, 0}));
        positives.increment(batch.positives.back().pin);
      }
      for (int i = 0; i < 3; ++i) {
        batch.negatives.push_back(mt::random_context(cfg, rng, id++));
        negatives.increment(batch.negatives.back().pin);
      }
      const mb::ModelParams params = mb::init_params(cfg, 4);
      const double err = mb::grad_check(
          [&](std::span<const double> w, std::vector<double>* g) {
            mb::ModelParams p = params;
            p.unflatten(w);
            mb::ModelParams grads = p.zeros_like();
            mb::LossOptions opts;
            if (g) opts.grads = &grads;
            const double loss = mb::combined_loss(batch, p, cfg, positives, negatives, opts).total;
            if (g) *g = grads.flatten();
            return loss;
          },
          params.flatten());
      if (err > worst_model) {
        worst_model = err;
        worst_name = std::string(mb::variant_name(v)) + "/" + std::string(mb::encoder_mode_name(m));
      }
    }
  }
  o.detail << "combined loss worst rel err " << worst_model << " (" << worst_name << "); ops:";
  o.require(worst_model <= 1e-4, "end-to-end <= 1e-4");
  for (const auto& [name, err] : op_checks()) {
    o.detail << ' ' << name << '=' << err;
    o.require(err <= 1e-6, name + " <= 1e-6");
  }
  o.detail << ' ';
  return o;
}

// ---------------------------------------------------------------- 6

mb::Tensor unit_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  mb::Tensor t = mt::random_tensor({n, d}, rng);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = t.row(i);
    double s = 0.0;
    for (double x : row) s += x * x;
    for (double& x : row) x /= std::sqrt(s);
  }
  return t;
}

Outcome criterion_sampled_softmax() {
  Outcome o;
  std::mt19937_64 rng(2);
  const std::size_t n = 50;
  const double scale = 5.0;
  const mb::Tensor q = unit_rows(n, 8, rng), catalog = unit_rows(n, 8, rng);
  // Full softmax cross entropy, computed directly.
  double full = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logits(n);
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < 8; ++c) dot += q.row(i)[c] * catalog.row(j)[c];
      logits[j] = scale * dot;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    full += -(logits[i] - mx - std::log(z)) / static_cast<double>(n);
  }
  const std::vector<double> uniform(n, 1.0 / n);
  const double sampled = mb::sampled_softmax_loss(q, catalog, uniform, scale).loss;
  o.detail << "|sampled - full| = " << std::abs(sampled - full);
  o.require(std::abs(sampled - full) <= 1e-6, "full catalog within 1e-6");
  const mb::Tensor q1 = unit_rows(1, 8, rng), e1 = unit_rows(1, 8, rng);
  const std::vector<double> p1{0.3};
  const double single = mb::sampled_softmax_loss(q1, e1, p1, scale).loss;
  o.detail << ", |B|=1 loss " << single << ' ';
  o.require(single == 0.0, "|B|=1 gives exactly 0");
  return o;
}

// ---------------------------------------------------------------- 7

Outcome criterion_sketch() {
  Outcome o;
  const std::size_t domain = 50000;
  std::vector<double> cdf(domain);
  double acc = 0.0;
  for (std::size_t i = 0; i < domain; ++i) cdf[i] = acc += 1.0 / static_cast<double>(i + 1);
  for (double& c : cdf) c /= acc;
  mb::CountMinSketch sketch(2048, 4, 17);
  std::map<mb::NodeId, std::uint64_t> truth;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100000; ++i) {
    const mb::NodeId id = static_cast<mb::NodeId>(std::lower_bound(cdf.begin(), cdf.end(), u(rng)) - cdf.begin()) + 1;
    sketch.increment(id);
    ++truth[id];
  }
  const auto bound = static_cast<std::uint64_t>(std::ceil(std::exp(1.0) / 2048.0 * static_cast<double>(sketch.total())));
  std::size_t under = 0, within = 0;
  for (const auto& [id, count] : truth) {
    const auto est = sketch.estimate(id);
    under += est < count;
    within += est - count <= bound;
  }
  const double frac = static_cast<double>(within) / static_cast<double>(truth.size());
  o.detail << truth.size() << " distinct items, underestimates " << under << ", within bound " << bound << ": "
           << 100.0 * frac << "% ";
  o.require(under == 0, "no underestimates");
  o.require(frac >= 0.98, ">= 98% within bound");
  return o;
}

// ---------------------------------------------------------------- 8

double max_abs_diff(const mb::Tensor& a, const mb::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double norm(const mb::Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  return std::sqrt(s);
}

Outcome criterion_invariance() {
  Outcome o;
  double worst_nbr = 0.0, worst_graph = 0.0, worst_norm = 0.0;
  for (mb::EncoderMode m : {mb::EncoderMode::kAttentionOnly, mb::EncoderMode::kFullBlock}) {
    mb::ModelConfig cfg = mt::toy_config(mb::Variant::kMultiBiSage, m);
    cfg.num_graphs = 4;
    cfg.neighbors = 6;
    std::mt19937_64 rng(21);
    const auto params = mb::init_params(cfg, 3);
    for (int trial = 0; trial < 10; ++trial) {
      const auto ctx = mt::random_context(cfg, rng, 1, {std::size_t(trial % 7), 6, 3, 1});
      const auto base = mb::variant_forward(ctx, params, cfg);
      std::vector<std::size_t> perm(cfg.neighbors);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      mb::PinContext shuffled = ctx;
      for (std::size_t g = 0; g < cfg.num_graphs; ++g) {
        for (std::size_t r = 0; r < perm.size(); ++r) {
          auto sv = ctx.graphs[g].visual.row(perm[r]);
          auto st = ctx.graphs[g].text.row(perm[r]);
          std::copy(sv.begin(), sv.end(), shuffled.graphs[g].visual.row(r).begin());
          std::copy(st.begin(), st.end(), shuffled.graphs[g].text.row(r).begin());
          shuffled.graphs[g].mask[r] = ctx.graphs[g].mask[perm[r]];
        }
      }
      worst_nbr = std::max(worst_nbr, max_abs_diff(base, mb::variant_forward(shuffled, params, cfg)));

      std::vector<std::size_t> gperm(cfg.num_graphs);
      std::iota(gperm.begin(), gperm.end(), 0);
      std::shuffle(gperm.begin(), gperm.end(), rng);
      auto p2 = params;
      auto c2 = ctx;
      for (std::size_t i = 0; i < gperm.size(); ++i) {
        p2.graphs[i] = params.graphs[gperm[i]];
        c2.graphs[i] = ctx.graphs[gperm[i]];
      }
      worst_graph = std::max(worst_graph, max_abs_diff(base, mb::variant_forward(c2, p2, cfg)));
    }
  }
  for (mb::Variant v : mb::all_variants()) {
    for (mb::EncoderMode m : {mb::EncoderMode::kAttentionOnly, mb::EncoderMode::kFullBlock}) {
      auto cfg = mt::toy_config(v, m);
      cfg.neighbors = 4;
      std::mt19937_64 rng(11);
      const auto params = mb::init_params(cfg, 2);
      for (int trial = 0; trial < 5; ++trial) {
        const auto ctx = mt::random_context(cfg, rng, 1, {std::size_t(trial % 5), 4});
        worst_norm = std::max(worst_norm, std::abs(norm(mb::variant_forward(ctx, params, cfg)) - 1.0));
      }
    }
  }
  bool lengths_ok = true;
  for (std::size_t n : {0u, 10u, 50u}) {
    for (std::size_t k : {1u, 6u}) {
      mb::ModelConfig cfg;
      cfg.num_graphs = k;
      cfg.neighbors = n;
      std::mt19937_64 rng(n * 10 + k);
      const auto params = mb::init_params(cfg, 1);
      mb::ForwardStats stats;
      mb::variant_forward(mt::random_context(cfg, rng), params, cfg, &stats);
      lengths_ok = lengths_ok && stats.sequence_lengths.size() == k + 1;
      for (std::size_t i = 0; lengths_ok && i < k; ++i) lengths_ok = stats.sequence_lengths[i] == 1 + 2 * (1 + n);
      lengths_ok = lengths_ok && stats.sequence_lengths.back() == 1 + k;
    }
  }
  o.detail << "neighbor perm " << worst_nbr << ", graph perm " << worst_graph << ", |norm-1| " << worst_norm
           << ", sequence lengths " << (lengths_ok ? "ok" : "wrong") << ' ';
  o.require(worst_nbr <= 1e-10, "neighbor permutation <= 1e-10");
  o.require(worst_graph <= 1e-10, "graph permutation <= 1e-10");
  o.require(worst_norm <= 1e-12, "unit norm to 1e-12");
  o.require(lengths_ok, "token counts");
  return o;
}

// ---------------------------------------------------------------- 9

mb::EvalResult untrained_recall(const mb::PipelineConfig& cfg) {
  const mb::Corpus corpus = mb::gen_corpus(cfg.synth);
  mb::NeighborTable table;
  for (const auto& g : corpus.graphs) table.merge(mb::run_walks(g, g.pin_ids(), cfg.walk));
  const mb::TrainState state = mb::init_state(cfg.model, cfg.graph_ids(), cfg.train);
  return mb::evaluate_model(state, corpus.features, table, corpus.test_pairs, cfg.eval);
}

Outcome criterion_null() {
  Outcome o;
  // No latent structure: one cluster, engaged pins drawn uniformly.
  mb::PipelineConfig cfg = mb::preset("desk");
  cfg.synth.num_pins = 5200;
  cfg.synth.clusters = 1;
  cfg.synth.pair_noise = 1.0;
  cfg.synth.pair_count = 30000;
  cfg.synth.intra_edge_prob = 0.004;
  cfg.seed = 1;
  cfg.finalize();
  const auto r = untrained_recall(cfg);
  const double null = 10.0 / 5001.0;
  o.detail << "untrained recall@10 " << r.recall << " on " << r.ranks.size() << " pairs, null " << null
           << ", sigma " << r.null_sigma << ", z " << (r.recall - null) / r.null_sigma;
  o.require(std::abs(r.recall - null) <= 3.0 * r.null_sigma, "within 3 sigma of 10/5001");

  mb::PipelineConfig planted = mb::preset("desk");
  planted.seed = 1;
  planted.finalize();
  const auto rp = untrained_recall(planted);
  o.detail << "; for reference, untrained recall on the planted corpus " << rp.recall << ' ';
  return o;
}

// ---------------------------------------------------------------- 10

Outcome criterion_reproducibility(const std::filesystem::path& root) {
  Outcome o;
  mb::PipelineConfig cfg = mb::preset("desk");
  cfg.synth.num_pins = 2000;
  cfg.synth.num_ctx = 1000;
  cfg.synth.pair_count = 4000;
  cfg.train.steps = 300;
  cfg.eval.pool_size = 1000;
  cfg.seed = 4;
  cfg.finalize();
  const auto a = mb::run_pipeline(cfg, (root / "repro_a").string());
  const auto b = mb::run_pipeline(cfg, (root / "repro_b").string());
  const std::string ma = mt::read_file((root / "repro_a" / "metrics.tsv").string());
  const bool same_metrics = ma == mt::read_file((root / "repro_b" / "metrics.tsv").string());
  const bool same_report = mt::read_file((root / "repro_a" / "report.tsv").string()) ==
                           mt::read_file((root / "repro_b" / "report.tsv").string());
  o.detail << "metrics TSV identical " << (same_metrics ? "yes" : "no") << " ("
           << std::count(ma.begin(), ma.end(), '\n') << " lines), report identical " << (same_report ? "yes" : "no");
  o.require(same_metrics && !ma.empty(), "identical metrics TSVs");
  o.require(same_report && a.recall == b.recall, "identical reports");

  // Resume: stop at step 150, checkpoint, reload, finish.
  const auto corpus = mb::gen_corpus(cfg.synth);
  mb::NeighborTable table;
  for (const auto& g : corpus.graphs) table.merge(mb::run_walks(g, g.pin_ids(), cfg.walk));
  const std::vector<mb::NodeId> catalog(corpus.features.ids().begin(), corpus.features.ids().end());
  const mb::TrainData data{corpus.train_pairs, &corpus.features, &table, catalog};
  auto full = mb::init_state(cfg.model, cfg.graph_ids(), cfg.train);
  const auto full_log = mb::fit(full, data, cfg.train);
  auto first = mb::init_state(cfg.model, cfg.graph_ids(), cfg.train);
  mb::fit(first, data, cfg.train, nullptr, {}, 150);
  const std::string ckpt = (root / "resume.ckpt").string();
  mb::save_checkpoint(first, ckpt);
  auto resumed = mb::load_checkpoint(ckpt);
  const auto rest_log = mb::fit(resumed, data, cfg.train);
  double worst = 0.0;
  for (std::size_t i = 0; i < rest_log.size(); ++i) {
    const double x = full_log[150 + i].loss.total, y = rest_log[i].loss.total;
    worst = std::max(worst, std::abs(x - y) / std::max(std::abs(x), 1e-12));
  }
  o.detail << "; resume from step 150: " << rest_log.size() << " steps, worst relative loss gap " << worst << ' ';
  o.require(rest_log.size() == 150 && resumed.step == full.step, "resume reaches the same step");
  o.require(worst <= 1e-5, "resume within 1e-5 relative");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || only.contains(id); };
  const auto root = std::filesystem::temp_directory_path() / ("mbs_acceptance_" + std::to_string(::getpid()));
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  std::ofstream results("acceptance_results.txt");
  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& run) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what() << ' ';
    }
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.1fs", seconds_since(t0));
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + " (" +
                             name + "): " + o.detail.str() + "[" + secs + "]";
    std::cout << line << std::endl;
    results << line << std::endl;
    failures += !o.pass;
  };

  RecallRuns runs;
  std::string runs_error;
  try {
    if (wanted(1) || wanted(2)) runs = recall_runs(root);
  } catch (const std::exception& e) {
    runs_error = e.what();
  }
  auto needs_runs = [&](Outcome (*f)(const RecallRuns&)) {
    return [&, f] {
      if (!runs_error.empty()) throw std::runtime_error(runs_error);
      return f(runs);
    };
  };
  report(1, "recall with all graphs vs graph 0", needs_runs(criterion_recall));
  report(2, "single-graph ablation", needs_runs(criterion_single_graph));
  report(3, "walker visit distributions", criterion_walker);
  report(4, "pruning contract", criterion_pruning);
  report(5, "gradient checks", criterion_gradients);
  report(6, "sampled softmax oracle", criterion_sampled_softmax);
  report(7, "count-min sketch bound", criterion_sketch);
  report(8, "invariances and shapes", criterion_invariance);
  report(9, "untrained null model", criterion_null);
  report(10, "reproducibility and resume", [&] { return criterion_reproducibility(root); });

  std::filesystem::remove_all(root);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures;
}
