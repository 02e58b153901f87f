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

#include "multibisage/pipeline.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "multibisage/synthgen.h"

namespace multibisage {

namespace fs = std::filesystem;

BipartiteGraph prune_file(const std::string& in_path, int graph_id, const PruneConfig& cfg,
                          bool enabled, const std::string& out_path) {
  const BipartiteGraph g = load_edges(in_path, graph_id);
  BipartiteGraph out = enabled ? degree_prune(g, cfg) : g;
  if (const auto parent = fs::path(out_path).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_edges(out, out_path);
  return out;
}

NeighborTable walk_graphs(const std::vector<BipartiteGraph>& graphs, const WalkConfig& cfg,
                          const std::string& out_path) {
  NeighborTable table;
  for (const BipartiteGraph& g : graphs) table.merge(run_walks(g, g.pin_ids(), cfg));
  if (const auto parent = fs::path(out_path).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_neighbor_table(table, out_path);
  return table;
}

EvalResult evaluate_model(const TrainState& state, const FeatureStore& features,
                          const NeighborTable& table, const std::vector<Pair>& pairs,
                          const EvalConfig& cfg) {
  cfg.validate();
  const std::vector<NodeId> pool = sample_pool(features.ids(), cfg.pool_size, cfg.seed);
  std::vector<NodeId> ids = pool;
  for (const Pair& p : pairs) {
    ids.push_back(p.query);
    ids.push_back(p.engaged);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const Embeddings emb = embed_pins(ids, state.params, state.model, state.graph_ids, features, table, cfg.threads);
  return evaluate(pairs, emb, pool, cfg.k, cfg.threads);
}

TrainState train_model(const PipelineConfig& cfg, const TrainInputs& in, const std::string& out_dir,
                       const TrainState* resume) {
  fs::create_directories(out_dir);
  const ArtifactPaths paths{out_dir};
  TrainState state = resume != nullptr ? *resume : init_state(cfg.model, cfg.graph_ids(), cfg.train);
  if (state.model.visual_dim != in.features->visual_dim() || state.model.text_dim != in.features->text_dim()) {
    throw DataError("feature widths do not match the model");
  }
  const TrainData data{in.train_pairs, in.features, in.table, in.features->ids()};

  std::ofstream metrics(paths.metrics(), resume != nullptr ? std::ios::app : std::ios::trunc);
  if (!metrics) throw DataError("cannot write " + paths.metrics());
  if (resume == nullptr) write_metrics_header(metrics);
  std::ofstream eval_log;
  EvalHook hook;
  if (cfg.train.eval_every > 0 && !in.test_pairs.empty()) {
    eval_log.open(paths.eval_log(), resume != nullptr ? std::ios::app : std::ios::trunc);
    if (resume == nullptr) eval_log << "step\trecall_at_" << cfg.eval.k << '\n';
    hook = [&](std::size_t step, const TrainState& s) {
      const EvalResult r = evaluate_model(s, *in.features, *in.table, in.test_pairs, cfg.eval);
      eval_log << step << '\t' << r.recall << '\n';
    };
  }
  fit(state, data, cfg.train, &metrics, hook);
  save_checkpoint(state, paths.checkpoint());
  return state;
}

void write_report(const std::string& path, const std::vector<std::pair<std::string, double>>& rows) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os.precision(10);
  os << "metric\tvalue\n";
  for (const auto& [name, value] : rows) os << name << '\t' << value << '\n';
}

std::vector<std::pair<std::string, double>> eval_report_rows(const EvalResult& r, const EvalConfig& cfg,
                                                             std::size_t pool_size) {
  const std::string k = std::to_string(cfg.k);
  return {{"recall_at_" + k, r.recall},
          {"hits", static_cast<double>(r.hits)},
          {"pairs", static_cast<double>(r.ranks.size())},
          {"pool_size", static_cast<double>(pool_size)},
          {"null_recall_at_" + k, r.null_recall},
          {"null_sigma", r.null_sigma}};
}

void write_manifest(const PipelineConfig& cfg, const std::string& out_dir,
                    const std::vector<std::string>& artifacts) {
  const std::string text = config_to_json(cfg);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  nlohmann::json j;
  j["config_hash"] = hash;
  j["seed"] = cfg.seed;
  j["config"] = nlohmann::json::parse(text);
  j["artifacts"] = artifacts;
  std::ofstream os(out_dir + "/manifest.json");
  if (!os) throw DataError("cannot write manifest in " + out_dir);
  os << j.dump(2) << '\n';
}

namespace {

struct Prepared {
  FeatureStore features;
  NeighborTable table;
  std::vector<Pair> train, test;
  std::vector<std::string> artifacts;
};

Prepared prepare(const PipelineConfig& cfg, const ArtifactPaths& paths) {
  Prepared p;
  write_corpus(gen_corpus(cfg.synth), paths.corpus_dir());
  std::vector<BipartiteGraph> graphs;
  for (std::size_t g = 0; g < cfg.synth.num_graphs(); ++g) {
    const int id = static_cast<int>(g);
    graphs.push_back(prune_file(paths.raw_graph(id), id, cfg.prune, cfg.prune_enabled, paths.pruned_graph(id)));
    p.artifacts.push_back(paths.raw_graph(id));
    p.artifacts.push_back(paths.pruned_graph(id));
  }
  walk_graphs(graphs, cfg.walk, paths.neighbors());
  p.features = load_features(paths.features());
  p.table = load_neighbor_table(paths.neighbors());
  p.train = load_pairs(paths.train_pairs());
  p.test = load_pairs(paths.test_pairs());
  for (const auto& a : {paths.features(), paths.train_pairs(), paths.test_pairs(), paths.neighbors()}) {
    p.artifacts.push_back(a);
  }
  return p;
}

}  // namespace

EvalResult run_pipeline(const PipelineConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  const ArtifactPaths paths{out_dir};
  Prepared p = prepare(cfg, paths);
  train_model(cfg, {&p.features, &p.table, p.train, p.test}, out_dir);
  const TrainState state = load_checkpoint(paths.checkpoint());
  const EvalResult r = evaluate_model(state, p.features, p.table, p.test, cfg.eval);
  write_report(paths.report(), eval_report_rows(r, cfg.eval, std::min(cfg.eval.pool_size, p.features.size())));
  for (const auto& a : {paths.checkpoint(), paths.metrics(), paths.report()}) p.artifacts.push_back(a);
  write_manifest(cfg, out_dir, p.artifacts);
  return r;
}

std::vector<std::pair<std::vector<int>, EvalResult>> run_ablation(
    const PipelineConfig& cfg, const std::vector<std::vector<int>>& subsets, const std::string& out_dir) {
  if (subsets.empty()) throw ConfigError("ablate: no graph subsets given");
  cfg.validate();
  fs::create_directories(out_dir);
  const ArtifactPaths paths{out_dir};
  Prepared p = prepare(cfg, paths);
  std::vector<std::pair<std::vector<int>, EvalResult>> rows;
  for (const auto& subset : subsets) {
    PipelineConfig sub = cfg;
    sub.graphs = subset;
    sub.finalize();
    sub.validate();
    std::string label;
    for (int g : subset) label += (label.empty() ? "" : "_") + std::to_string(g);
    const std::string dir = out_dir + "/graphs_" + label;
    const TrainState state = train_model(sub, {&p.features, &p.table, p.train, p.test}, dir);
    const EvalResult r = evaluate_model(state, p.features, p.table, p.test, sub.eval);
    write_report(ArtifactPaths{dir}.report(),
                 eval_report_rows(r, sub.eval, std::min(sub.eval.pool_size, p.features.size())));
    p.artifacts.push_back(dir + "/model.ckpt");
    rows.emplace_back(subset, r);
  }
  std::ofstream os(out_dir + "/ablation.tsv");
  if (!os) throw DataError("cannot write ablation.tsv in " + out_dir);
  os.precision(10);
  os << "graphs\tnum_graphs\trecall_at_" << cfg.eval.k << "\tnull_recall_at_" << cfg.eval.k
     << "\tdelta_vs_first\n";
  for (const auto& [subset, r] : rows) {
    std::string label;
    for (int g : subset) label += (label.empty() ? "" : ",") + std::to_string(g);
    os << label << '\t' << subset.size() << '\t' << r.recall << '\t' << r.null_recall << '\t'
       << r.recall - rows.front().second.recall << '\n';
  }
  p.artifacts.push_back(out_dir + "/ablation.tsv");
  write_manifest(cfg, out_dir, p.artifacts);
  return rows;
}

}  // namespace multibisage
