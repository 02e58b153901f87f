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

#include <string>
#include <utility>
#include <vector>

#include "multibisage/config.h"
#include "multibisage/eval.h"
#include "multibisage/features.h"
#include "multibisage/graph.h"
#include "multibisage/trainer.h"
#include "multibisage/walker.h"

namespace multibisage {

/// File layout under an output directory.
struct ArtifactPaths {
  std::string root;

  std::string corpus_dir() const { return root + "/corpus"; }
  std::string raw_graph(int g) const { return corpus_dir() + "/graph_" + std::to_string(g) + ".tsv"; }
  std::string features() const { return corpus_dir() + "/features.bin"; }
  std::string train_pairs() const { return corpus_dir() + "/train_pairs.tsv"; }
  std::string test_pairs() const { return corpus_dir() + "/test_pairs.tsv"; }
  std::string pruned_graph(int g) const { return root + "/pruned/graph_" + std::to_string(g) + ".tsv"; }
  std::string neighbors() const { return root + "/neighbors.tsv"; }
  std::string checkpoint() const { return root + "/model.ckpt"; }
  std::string metrics() const { return root + "/metrics.tsv"; }
  std::string eval_log() const { return root + "/eval_log.tsv"; }
  std::string report() const { return root + "/report.tsv"; }
  std::string manifest() const { return root + "/manifest.json"; }
};

/// Prunes the graph in `in_path` (when enabled) and writes it to `out_path`.
BipartiteGraph prune_file(const std::string& in_path, int graph_id, const PruneConfig& cfg,
                          bool enabled, const std::string& out_path);

/// Walks from every pin of each graph and writes the merged table.
NeighborTable walk_graphs(const std::vector<BipartiteGraph>& graphs, const WalkConfig& cfg,
                          const std::string& out_path);

struct TrainInputs {
  const FeatureStore* features = nullptr;
  const NeighborTable* table = nullptr;
  std::vector<Pair> train_pairs;
  std::vector<Pair> test_pairs;  // used by the periodic eval hook
};

/// Trains from scratch (or from `resume` when given) and writes the
/// checkpoint and metrics under `out_dir`.
TrainState train_model(const PipelineConfig& cfg, const TrainInputs& in, const std::string& out_dir,
                       const TrainState* resume = nullptr);

/// Embeds pool and pair pins with `state` and computes recall@k. The pool is
/// drawn from the feature catalog.
EvalResult evaluate_model(const TrainState& state, const FeatureStore& features,
                          const NeighborTable& table, const std::vector<Pair>& pairs,
                          const EvalConfig& cfg);

/// `metric<TAB>value` rows.
void write_report(const std::string& path, const std::vector<std::pair<std::string, double>>& rows);
std::vector<std::pair<std::string, double>> eval_report_rows(const EvalResult& r, const EvalConfig& cfg,
                                                             std::size_t pool_size);

/// gen-synth -> prune -> walk -> train -> eval under `out_dir`, plus
/// manifest.json. Every stage reads its inputs back from disk, exactly as
/// the individual subcommands do.
EvalResult run_pipeline(const PipelineConfig& cfg, const std::string& out_dir);

/// Trains and evaluates one model per graph subset on a shared corpus and
/// neighbor table; writes ablation.tsv.
std::vector<std::pair<std::vector<int>, EvalResult>> run_ablation(
    const PipelineConfig& cfg, const std::vector<std::vector<int>>& subsets, const std::string& out_dir);

void write_manifest(const PipelineConfig& cfg, const std::string& out_dir,
                    const std::vector<std::string>& artifacts);

}  // namespace multibisage
