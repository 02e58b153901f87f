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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "multibisage/config.h"
#include "multibisage/synthgen.h"
#include "multibisage/trainer.h"
#include "test_support.h"

namespace multibisage {
namespace {

using testing::TempDir;

TEST(LearningRate, Schedule) {
  TrainConfig cfg;
  cfg.steps = 1000;
  cfg.warmup_steps = 100;
  cfg.floor_lr = 1e-4;
  EXPECT_DOUBLE_EQ(lr_at(0, cfg), 0.002 / 100);
  EXPECT_DOUBLE_EQ(lr_at(99, cfg), 0.002);
  EXPECT_DOUBLE_EQ(lr_at(100, cfg), 0.002);
  EXPECT_NEAR(lr_at(550, cfg), (0.002 + 1e-4) / 2, 1e-15);
  EXPECT_NEAR(lr_at(1000, cfg), 1e-4, 1e-15);
  double prev = lr_at(100, cfg);
  for (std::size_t s = 0; s <= 1000; ++s) {
    EXPECT_GE(lr_at(s, cfg), 0.0);
    if (s > 100) {
      EXPECT_LE(lr_at(s, cfg), prev);
      prev = lr_at(s, cfg);
    }
  }
  // Continuity at the boundary: the last warmup step already sits at peak.
  EXPECT_NEAR(lr_at(99, cfg), lr_at(100, cfg), 1e-12);
}

TEST(LearningRate, DefaultWarmupIsFivePercent) {
  TrainConfig cfg;
  cfg.steps = 2000;
  EXPECT_EQ(cfg.warmup(), 100u);
  cfg.warmup_steps = 2000;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.floor_lr = cfg.peak_lr;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// A state holding a single learnable tensor.
TrainState scalar_state(std::vector<double> w) {
  TrainState s;
  const std::size_t n = w.size();
  s.params.agg_global = Tensor::from_values({1, n}, std::move(w));
  s.adam_m = s.params.zeros_like();
  s.adam_v = s.params.zeros_like();
  return s;
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto s = scalar_state({0.3, -2.0});
  const auto before = s.params;
  adam_step(s, s.params.zeros_like(), 0.1, TrainConfig{});
  EXPECT_EQ(s.params, before);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepHandValue) {
  // t=1: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  auto s = scalar_state({1.0});
  auto g = s.params.zeros_like();
  g.agg_global[0] = 1.0;
  adam_step(s, g, 0.1, TrainConfig{});
  EXPECT_NEAR(s.params.agg_global[0], 0.9, 1e-6);
}

TEST(Adam, ConvergesOnQuadratic) {
  auto s = scalar_state({5.0, -5.0});
  TrainConfig cfg;
  for (int i = 0; i < 100; ++i) {
    auto g = s.params.zeros_like();
    for (std::size_t j = 0; j < 2; ++j) g.agg_global[j] = 2.0 * s.params.agg_global[j];
    adam_step(s, g, 0.1, cfg);
  }
  EXPECT_LT(std::hypot(s.params.agg_global[0], s.params.agg_global[1]), 0.5);
}

TEST(Adam, NonFiniteGradientNamesTheTensor) {
  auto s = scalar_state({1.0});
  auto g = s.params.zeros_like();
  g.agg_global[0] = std::nan("");
  try {
    adam_step(s, g, 0.1, TrainConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("agg.global_token"), std::string::npos);
  }
}

TEST(ClipGradients, ScalesToMaxNorm) {
  auto s = scalar_state({0.0, 0.0});
  auto g = s.params.zeros_like();
  g.agg_global[0] = 30.0;
  g.agg_global[1] = 40.0;
  EXPECT_DOUBLE_EQ(clip_gradients(g, 10.0), 50.0);
  EXPECT_NEAR(g.agg_global[0], 6.0, 1e-12);
  EXPECT_NEAR(g.agg_global[1], 8.0, 1e-12);
  EXPECT_NEAR(clip_gradients(g, 100.0), 10.0, 1e-12);
  EXPECT_NEAR(g.agg_global[0], 6.0, 1e-12);
}

TEST(Adam, OneStepDecreasesToyLoss) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto cfg = testing::toy_config(Variant::kMultiBiSage);
    cfg.logit_scale = 5.0;
    std::mt19937_64 rng(seed);
    Batch batch;
    CountMinSketch pos, neg;
    NodeId id = 1;
    for (int i = 0; i < 4; ++i) {
      batch.queries.push_back(testing::random_context(cfg, rng, id++));
      batch.positives.push_back(testing::random_context(cfg, rng, id++));
      batch.negatives.push_back(testing::random_context(cfg, rng, id++));
      pos.increment(batch.positives.back().pin);
      neg.increment(batch.negatives.back().pin);
    }
    TrainConfig tc;
    tc.seed = seed;
    auto state = init_state(cfg, {0, 1}, tc);
    auto grads = state.params.zeros_like();
    LossOptions opts;
    opts.grads = &grads;
    const double before = combined_loss(batch, state.params, cfg, pos, neg, opts).total;
    adam_step(state, grads, 1e-3, tc);
    const double after = combined_loss(batch, state.params, cfg, pos, neg).total;
    EXPECT_LT(after, before) << "seed " << seed;
  }
}

// Small planted corpus with walks, shared by the fit and checkpoint tests.
struct SmallRun {
  PipelineConfig cfg;
  Corpus corpus;
  NeighborTable table;
  std::vector<NodeId> catalog;

  explicit SmallRun(std::size_t steps) {
    cfg = preset("desk");
    cfg.synth.num_pins = 400;
    cfg.synth.num_ctx = 200;
    cfg.synth.pair_count = 600;
    cfg.model.neighbors = 3;
    cfg.model.token_dim = 8;
    cfg.model.embed_dim = 8;
    cfg.train.batch_size = 16;
    cfg.train.steps = steps;
    cfg.walk.nw = 200;
    cfg.threads = 2;
    cfg.finalize();
    corpus = gen_corpus(cfg.synth);
    for (const auto& g : corpus.graphs) {
      std::vector<NodeId> starts(g.pin_ids().begin(), g.pin_ids().end());
      table.merge(run_walks(g, starts, cfg.walk));
    }
    catalog.assign(corpus.features.ids().begin(), corpus.features.ids().end());
  }
  TrainData data() const {
    return {corpus.train_pairs, &corpus.features, &table, catalog};
  }
  TrainState fresh() const { return init_state(cfg.model, cfg.graph_ids(), cfg.train); }
};

TEST(Fit, ZeroStepsKeepInitialParameters) {
  SmallRun run(0);
  auto state = run.fresh();
  const auto init = state.params;
  auto log = fit(state, run.data(), run.cfg.train);
  EXPECT_TRUE(log.empty());
  EXPECT_EQ(state.params, init);
}

TEST(Fit, DeterministicAndSketchTotals) {
  SmallRun run(12);
  auto a = run.fresh(), b = run.fresh();
  std::ostringstream ma, mb;
  write_metrics_header(ma);
  write_metrics_header(mb);
  auto la = fit(a, run.data(), run.cfg.train, &ma);
  auto lb = fit(b, run.data(), run.cfg.train, &mb);
  ASSERT_EQ(la.size(), 12u);
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la[i].loss.total, lb[i].loss.total);
  EXPECT_EQ(ma.str(), mb.str());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.step, 12u);
  EXPECT_EQ(a.positive_stream.total(), 12u * 16u);
  EXPECT_EQ(a.negative_stream.total(), 12u * 16u);
  EXPECT_EQ(ma.str().substr(0, ma.str().find('\n')),
            "step\tlr\tloss_sampled_softmax\tloss_mixed_negative\tloss_total");
}

TEST(Fit, ThreadCountDoesNotChangeTraining) {
  SmallRun run(5);
  auto a = run.fresh(), b = run.fresh();
  auto tc = run.cfg.train;
  tc.threads = 1;
  fit(a, run.data(), tc);
  tc.threads = 3;
  fit(b, run.data(), tc);
  EXPECT_EQ(a, b);
}

TEST(Fit, LossHalvesOnPlantedCorpus) {
  PipelineConfig cfg = preset("desk");
  cfg.graphs = {0};
  cfg.threads = 1;
  cfg.finalize();
  ASSERT_EQ(cfg.train.steps, 2000u);
  const Corpus corpus = gen_corpus(cfg.synth);
  NeighborTable table;
  const auto& g = corpus.graphs[0];
  table.merge(run_walks(g, g.pin_ids(), cfg.walk));
  const std::vector<NodeId> catalog(corpus.features.ids().begin(), corpus.features.ids().end());
  auto state = init_state(cfg.model, cfg.graph_ids(), cfg.train);
  const auto log = fit(state, {corpus.train_pairs, &corpus.features, &table, catalog}, cfg.train);
  ASSERT_EQ(log.size(), 2000u);
  double tail = 0.0;
  for (std::size_t i = log.size() - 20; i < log.size(); ++i) tail += log[i].loss.total / 20.0;
  EXPECT_LT(tail, 0.5 * log.front().loss.total) << "step-0 loss " << log.front().loss.total;
}

TEST(Fit, RejectsBadData) {
  SmallRun run(2);
  auto state = run.fresh();
  std::vector<Pair> unknown{{999999, 1}};
  TrainData bad{unknown, &run.corpus.features, &run.table, run.catalog};
  EXPECT_THROW(fit(state, bad, run.cfg.train), DataError);
  TrainData empty{{}, &run.corpus.features, &run.table, run.catalog};
  EXPECT_THROW(fit(state, empty, run.cfg.train), DataError);
}

TEST(Fit, EvalHookCadence) {
  SmallRun run(9);
  auto tc = run.cfg.train;
  tc.eval_every = 4;
  auto state = run.fresh();
  std::vector<std::size_t> seen;
  fit(state, run.data(), tc, nullptr, [&](std::size_t step, const TrainState&) { seen.push_back(step); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{4, 8}));
}

TEST(Checkpoint, RoundTripIsIdempotent) {
  TempDir dir("ckpt");
  SmallRun run(3);
  auto state = run.fresh();
  fit(state, run.data(), run.cfg.train);
  save_checkpoint(state, dir.file("a.ckpt"));
  auto loaded = load_checkpoint(dir.file("a.ckpt"));
  save_checkpoint(loaded, dir.file("b.ckpt"));
  EXPECT_EQ(testing::read_file(dir.file("a.ckpt")), testing::read_file(dir.file("b.ckpt")));
  EXPECT_EQ(loaded.step, state.step);
  EXPECT_EQ(loaded.graph_ids, state.graph_ids);
  EXPECT_EQ(loaded.positive_stream, state.positive_stream);
  EXPECT_EQ(loaded.negative_stream, state.negative_stream);
  auto a = state.params.flatten(), b = loaded.params.flatten();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(static_cast<float>(a[i]), b[i]);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  TempDir dir("ckpt");
  SmallRun run(1);
  auto state = run.fresh();
  save_checkpoint(state, dir.file("a.ckpt"));
  const std::string bytes = testing::read_file(dir.file("a.ckpt"));
  std::ofstream(dir.file("trunc.ckpt"), std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint(dir.file("trunc.ckpt")), DataError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::ofstream(dir.file("magic.ckpt"), std::ios::binary) << bad;
  EXPECT_THROW(load_checkpoint(dir.file("magic.ckpt")), DataError);
  EXPECT_THROW(load_checkpoint(dir.file("missing.ckpt")), DataError);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  TempDir dir("ckpt");
  SmallRun run(10);
  auto full = run.fresh();
  auto full_log = fit(full, run.data(), run.cfg.train);

  auto head = run.fresh();
  fit(head, run.data(), run.cfg.train, nullptr, {}, 6);
  ASSERT_EQ(head.step, 6u);
  save_checkpoint(head, dir.file("mid.ckpt"));
  auto resumed = load_checkpoint(dir.file("mid.ckpt"));
  auto tail_log = fit(resumed, run.data(), run.cfg.train);
  ASSERT_EQ(tail_log.size(), 4u);
  for (std::size_t i = 0; i < tail_log.size(); ++i) {
    const double want = full_log[6 + i].loss.total;
    EXPECT_EQ(tail_log[i].step, 6 + i);
    EXPECT_LE(std::abs(tail_log[i].loss.total - want) / std::abs(want), 1e-5);
  }
}

}  // namespace
}  // namespace multibisage
