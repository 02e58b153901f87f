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

#include "multibisage/trainer.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

namespace multibisage {

std::size_t TrainConfig::warmup() const {
  return warmup_steps.value_or(steps / 20);
}

void TrainConfig::validate() const {
  if (!(peak_lr > floor_lr && floor_lr >= 0.0)) throw ConfigError("train: need peak_lr > floor_lr >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (steps > 0 && warmup() >= steps) throw ConfigError("train: warmup_steps must be < steps");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw ConfigError("train: invalid Adam hyperparameters");
  }
  if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be >= 0");
  if (sketch_width < 1 || sketch_depth < 1) throw ConfigError("train: sketch dimensions must be >= 1");
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  const std::size_t warm = cfg.warmup();
  if (step < warm) {
    return cfg.peak_lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  }
  if (cfg.steps <= warm) return cfg.floor_lr;
  const double t = std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(cfg.steps - warm));
  return cfg.floor_lr + 0.5 * (cfg.peak_lr - cfg.floor_lr) * (1.0 + std::cos(std::numbers::pi * t));
}

TrainState init_state(const ModelConfig& model, std::vector<int> graph_ids, const TrainConfig& cfg) {
  model.validate();
  if (graph_ids.size() != model.num_graphs) throw ConfigError("graph list length != k");
  TrainState s;
  s.model = model;
  s.graph_ids = std::move(graph_ids);
  s.params = init_params(model, derive_seed(cfg.seed, 0x696e6974));
  s.adam_m = s.params.zeros_like();
  s.adam_v = s.params.zeros_like();
  s.positive_stream = CountMinSketch(cfg.sketch_width, cfg.sketch_depth, derive_seed(cfg.seed, 1));
  s.negative_stream = CountMinSketch(cfg.sketch_width, cfg.sketch_depth, derive_seed(cfg.seed, 2));
  return s;
}

void check_finite(const ModelParams& tensors, const char* what) {
  tensors.for_each([&](const std::string& name, const Tensor& t) {
    if (!t.all_finite()) throw NumericError(std::string("non-finite ") + what + " in " + name);
  });
}

double clip_gradients(ModelParams& grads, double max_norm) {
  double sq = 0.0;
  grads.for_each([&](const std::string&, const Tensor& t) {
    for (double v : t.values()) sq += v * v;
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    grads.for_each([&](const std::string&, Tensor& t) { t *= scale; });
  }
  return norm;
}

void adam_step(TrainState& state, const ModelParams& grads, double lr, const TrainConfig& cfg) {
  check_finite(grads, "gradient");
  std::vector<const Tensor*> g;
  grads.for_each([&](const std::string&, const Tensor& t) { g.push_back(&t); });
  std::vector<Tensor*> m, v;
  state.adam_m.for_each([&](const std::string&, Tensor& t) { m.push_back(&t); });
  state.adam_v.for_each([&](const std::string&, Tensor& t) { v.push_back(&t); });
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  std::size_t i = 0;
  state.params.for_each([&](const std::string& name, Tensor& w) {
    if (i >= g.size() || !g[i]->same_shape(w) || !m[i]->same_shape(w) || !v[i]->same_shape(w)) {
      throw ConfigError("adam_step: layout mismatch at " + name);
    }
    Tensor& mi = *m[i];
    Tensor& vi = *v[i];
    const Tensor& gi = *g[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      mi[j] = cfg.beta1 * mi[j] + (1.0 - cfg.beta1) * gi[j];
      vi[j] = cfg.beta2 * vi[j] + (1.0 - cfg.beta2) * gi[j] * gi[j];
      w[j] -= lr * (mi[j] / c1) / (std::sqrt(vi[j] / c2) + cfg.epsilon);
    }
    ++i;
  });
  ++state.step;
}

void write_metrics_header(std::ostream& os) {
  os << "step\tlr\tloss_sampled_softmax\tloss_mixed_negative\tloss_total\n";
}

namespace {

// Pair order for one pass over the data.
std::vector<std::uint32_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  std::mt19937_64 rng(derive_seed(seed, epoch, 0x73687566));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

std::vector<StepLog> fit(TrainState& state, const TrainData& data, const TrainConfig& cfg,
                         std::ostream* metrics, const EvalHook& on_eval,
                         std::optional<std::size_t> stop_at) {
  cfg.validate();
  if (data.features == nullptr || data.table == nullptr) throw ConfigError("fit: missing features or table");
  if (data.pairs.empty()) throw DataError("fit: empty dataset");
  if (data.catalog.empty()) throw DataError("fit: empty negative catalog");
  for (const Pair& p : data.pairs) {
    if (!data.features->contains(p.query) || !data.features->contains(p.engaged)) {
      throw DataError("fit: unknown pin in pair (" + std::to_string(p.query) + ", " +
                      std::to_string(p.engaged) + ")");
    }
  }
  const ModelConfig& mc = state.model;
  const std::size_t n = data.pairs.size(), bs = cfg.batch_size;
  const unsigned threads = cfg.threads == 0 ? default_threads() : cfg.threads;

  std::uint64_t cached_epoch = ~0ULL;
  std::vector<std::uint32_t> order;
  auto pair_at = [&](std::uint64_t idx) -> const Pair& {
    const std::uint64_t epoch = idx / n;
    if (epoch != cached_epoch) {
      order = epoch_order(n, cfg.seed, epoch);
      cached_epoch = epoch;
    }
    return data.pairs[order[idx % n]];
  };

  if (metrics != nullptr) metrics->precision(10);
  std::vector<StepLog> log;
  const std::size_t end = std::min(cfg.steps, stop_at.value_or(cfg.steps));
  while (state.step < end) {
    const std::size_t step = state.step;
    std::vector<Pair> pairs(bs);
    for (std::size_t j = 0; j < bs; ++j) pairs[j] = pair_at(static_cast<std::uint64_t>(step) * bs + j);
    std::vector<NodeId> negatives(bs);
    std::mt19937_64 rng(derive_seed(cfg.seed, step, 0x6e6567));
    std::uniform_int_distribution<std::size_t> pick(0, data.catalog.size() - 1);
    for (auto& id : negatives) id = data.catalog[pick(rng)];

    Batch batch;
    batch.queries.resize(bs);
    batch.positives.resize(bs);
    batch.negatives.resize(bs);
    parallel_for(bs, threads, [&](std::size_t j) {
      batch.queries[j] = build_context(pairs[j].query, *data.features, *data.table, state.graph_ids, mc);
      batch.positives[j] = build_context(pairs[j].engaged, *data.features, *data.table, state.graph_ids, mc);
      batch.negatives[j] = build_context(negatives[j], *data.features, *data.table, state.graph_ids, mc);
    });

    for (const Pair& p : pairs) state.positive_stream.increment(p.engaged);
    for (NodeId id : negatives) state.negative_stream.increment(id);

    ModelParams grads = state.params.zeros_like();
    LossOptions lo;
    lo.grads = &grads;
    lo.threads = threads;
    if (mc.dropout > 0.0) lo.dropout_seed = derive_seed(cfg.seed, step, 0x64726f70);
    const LossBreakdown loss =
        combined_loss(batch, state.params, mc, state.positive_stream, state.negative_stream, lo);
    if (!std::isfinite(loss.total)) throw NumericError("non-finite loss at step " + std::to_string(step));
    check_finite(grads, "gradient");
    clip_gradients(grads, cfg.clip_norm);
    const double lr = lr_at(step, cfg);
    adam_step(state, grads, lr, cfg);
    check_finite(state.params, "parameter");

    log.push_back({step, lr, loss});
    if (metrics != nullptr) {
      *metrics << step << '\t' << lr << '\t' << loss.in_batch << '\t' << loss.mixed << '\t'
               << loss.total << '\n';
    }
    if (on_eval && cfg.eval_every > 0 && state.step % cfg.eval_every == 0) on_eval(state.step, state);
  }
  return log;
}

}  // namespace multibisage
