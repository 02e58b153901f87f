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
#include <string>
#include <string_view>
#include <vector>

#include "multibisage/eval.h"
#include "multibisage/graph.h"
#include "multibisage/model.h"
#include "multibisage/synthgen.h"
#include "multibisage/trainer.h"
#include "multibisage/walker.h"

namespace multibisage {

/// One experiment: every module's settings in a single document.
struct PipelineConfig {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  SynthConfig synth;
  bool prune_enabled = true;
  PruneConfig prune;
  WalkConfig walk;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  /// Graphs fed to the model; empty means all generated graphs.
  std::vector<int> graphs;

  /// Graph ids in use, resolving the empty default.
  std::vector<int> graph_ids() const;
  /// Pushes the shared seed and thread count into every section and sets
  /// model.num_graphs from the graph list.
  void finalize();
  void validate() const;
};

/// "desk" (small widths, runs on a laptop) or "paper" (production widths;
/// shapes only).
PipelineConfig preset(std::string_view name);

/// Overlays a JSON document on `base`. Unknown keys are rejected.
PipelineConfig parse_config(const std::string& json_text, PipelineConfig base);
PipelineConfig load_config(const std::string& path, PipelineConfig base);
/// Canonical JSON (sorted keys), the input to the config hash. The thread
/// count is left out: it never changes results.
std::string config_to_json(const PipelineConfig& cfg);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace multibisage
