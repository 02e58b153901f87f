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
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multibisage/features.h"
#include "multibisage/loss.h"
#include "multibisage/model.h"
#include "multibisage/sketch.h"
#include "multibisage/walker.h"

namespace multibisage {

struct TrainConfig {
  double peak_lr = 0.002;
  double floor_lr = 0.0;
  std::size_t batch_size = 128;
  std::size_t steps = 2000;
  std::optional<std::size_t> warmup_steps;  // default: 5% of steps
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 10.0;  // global gradient norm; 0 disables
  std::size_t sketch_width = CountMinSketch::kDefaultWidth;
  std::size_t sketch_depth = CountMinSketch::kDefaultDepth;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // 0 = never
  unsigned threads = 0;

  std::size_t warmup() const;
  void validate() const;
};

/// Linear warmup to peak_lr, then cosine decay to floor_lr at `steps`.
double lr_at(std::size_t step, const TrainConfig& cfg);

struct TrainState {
  ModelConfig model;
  std::vector<int> graph_ids;  // graphs feeding the model, in order
  ModelParams params;
  ModelParams adam_m, adam_v;
  std::uint64_t step = 0;
  CountMinSketch positive_stream, negative_stream;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

/// Fresh state with initialized parameters and empty sketches.
TrainState init_state(const ModelConfig& model, std::vector<int> graph_ids,
                      const TrainConfig& cfg);

/// Throws NumericError naming the first tensor holding a non-finite value.
void check_finite(const ModelParams& tensors, const char* what);

/// Scales gradients so their global L2 norm is at most `max_norm`; returns
/// the norm before scaling.
double clip_gradients(ModelParams& grads, double max_norm);

/// One bias-corrected Adam update at learning rate `lr`; increments
/// state.step. Throws NumericError on a non-finite gradient.
void adam_step(TrainState& state, const ModelParams& grads, double lr, const TrainConfig& cfg);

struct Pair {
  NodeId query;
  NodeId engaged;
  friend bool operator==(const Pair&, const Pair&) = default;
};

struct TrainData {
  std::span<const Pair> pairs;
  const FeatureStore* features = nullptr;
  const NeighborTable* table = nullptr;
  std::span<const NodeId> catalog;  // negatives are drawn uniformly from here
};

struct StepLog {
  std::size_t step;
  double lr;
  LossBreakdown loss;
};

using EvalHook = std::function<void(std::size_t step, const TrainState&)>;

/// Runs steps state.step .. cfg.steps-1. Per step: assemble the batch from a
/// seeded per-epoch shuffle, draw |B| uniform negatives, update both
/// sketches, evaluate the combined loss, clip, and apply Adam. Batches and
/// negatives depend only on (seed, step), so a resumed run follows the same
/// data order. Writes one metrics row per step to `metrics` when given.
/// `stop_at` ends the run early without changing the schedule.
std::vector<StepLog> fit(TrainState& state, const TrainData& data, const TrainConfig& cfg,
                         std::ostream* metrics = nullptr, const EvalHook& on_eval = {},
                         std::optional<std::size_t> stop_at = std::nullopt);

void write_metrics_header(std::ostream& os);

/// Binary checkpoint: "BSCK", u32 entry count, then per entry u16 name
/// length, name, u32 rank, u32 dims, f32 values. Integers (step, sketch
/// cells) are stored as 16-bit limbs so they survive the f32 encoding.
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace multibisage
