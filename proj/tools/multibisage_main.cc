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

// Command-line front end: gen-synth, build-graph, prune, walk, train, eval,
// ablate and pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "multibisage/config.h"
#include "multibisage/eval.h"
#include "multibisage/features.h"
#include "multibisage/graph.h"
#include "multibisage/pipeline.h"
#include "multibisage/synthgen.h"
#include "multibisage/trainer.h"
#include "multibisage/walker.h"

namespace mb = multibisage;
namespace fs = std::filesystem;

namespace {

constexpr int kUsageError = 1;
constexpr int kDataError = 2;
constexpr int kInternalError = 3;

struct Common {
  std::string preset = "desk";
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;

  void attach(CLI::App* app, bool with_config) {
    if (with_config) {
      app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
      app->add_option("--preset", preset, "base preset: desk or paper")->capture_default_str();
    }
    app->add_option("--seed", seed, "seed (overrides the config)");
    app->add_option("--threads", threads, "worker threads (default: available parallelism)");
  }

  mb::PipelineConfig resolve() const {
    mb::PipelineConfig cfg = mb::preset(preset);
    if (!config_path.empty()) cfg = mb::load_config(config_path, cfg);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    cfg.finalize();
    return cfg;
  }
};

std::vector<int> parse_ids(const std::string& text) {
  std::vector<int> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 0) {
      throw mb::ConfigError("bad graph id list '" + text + "'");
    }
    ids.push_back(v);
  }
  if (ids.empty()) throw mb::ConfigError("empty graph id list");
  return ids;
}

void print_report(const mb::EvalResult& r, std::size_t k) {
  std::cout << "recall_at_" << k << '\t' << r.recall << '\n'
            << "null_recall_at_" << k << '\t' << r.null_recall << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-graph pin embedding pipeline"};
  app.require_subcommand(1);

  // gen-synth
  Common gen_common;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-synth", "generate a planted-cluster corpus");
  gen_common.attach(gen, true);
  gen->add_option("--out-dir", gen_out, "output directory")->required();

  // build-graph
  std::string bg_edges, bg_out;
  int bg_id = 0;
  auto* bg = app.add_subcommand("build-graph", "load and validate an edge file");
  bg->add_option("--edges", bg_edges, "edge TSV")->required()->check(CLI::ExistingFile);
  bg->add_option("--graph-id", bg_id, "graph id");
  bg->add_option("--out", bg_out, "write the deduplicated edge list here");

  // prune
  Common prune_common;
  std::string pr_edges, pr_out, pr_spec, pr_rule = "min_degree_scaled";
  int pr_id = 0;
  auto* pr = app.add_subcommand("prune", "degree-based pruning");
  prune_common.attach(pr, false);
  pr->add_option("--edges", pr_edges, "edge TSV")->required()->check(CLI::ExistingFile);
  pr->add_option("--graph-id", pr_id, "graph id");
  pr->add_option("--prune", pr_spec, "a,b,p")->required();
  pr->add_option("--rule", pr_rule, "min_degree_scaled or degree_scaled")->capture_default_str();
  pr->add_option("--out", pr_out, "output edge TSV")->required();

  // walk
  Common walk_common;
  std::vector<std::string> wk_graphs;
  std::string wk_ids, wk_out;
  mb::WalkConfig wk_cfg = mb::preset("desk").walk;
  auto* wk = app.add_subcommand("walk", "restart random walks -> neighbor table");
  walk_common.attach(wk, false);
  wk->add_option("--graph", wk_graphs, "edge TSV (repeatable)")->required()->check(CLI::ExistingFile);
  wk->add_option("--graph-ids", wk_ids, "ids for the --graph files (default 0,1,...)");
  wk->add_option("--nw", wk_cfg.nw, "segments per start pin")->capture_default_str();
  wk->add_option("--alpha", wk_cfg.alpha, "reset probability")->capture_default_str();
  wk->add_option("--top-k", wk_cfg.top_k, "neighbors kept per pin")->capture_default_str();
  wk->add_option("--out", wk_out, "neighbor table TSV")->required();

  // train
  Common train_common;
  std::string tr_out, tr_features, tr_neighbors, tr_pairs, tr_test_pairs, tr_resume;
  std::optional<std::size_t> tr_steps;
  auto* tr = app.add_subcommand("train", "train the embedding model");
  train_common.attach(tr, true);
  tr->add_option("--out-dir", tr_out, "output directory")->required();
  tr->add_option("--features", tr_features, "features file (default <out-dir>/corpus/features.bin)");
  tr->add_option("--neighbors", tr_neighbors, "neighbor table (default <out-dir>/neighbors.tsv)");
  tr->add_option("--pairs", tr_pairs, "training pairs (default <out-dir>/corpus/train_pairs.tsv)");
  tr->add_option("--test-pairs", tr_test_pairs, "held-out pairs for periodic eval");
  tr->add_option("--steps", tr_steps, "step budget (overrides the config)");
  tr->add_option("--resume", tr_resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  // eval
  Common eval_common;
  std::string ev_ckpt, ev_pairs, ev_features, ev_neighbors, ev_dump, ev_report;
  std::size_t ev_pool = 10000, ev_k = 10;
  auto* ev = app.add_subcommand("eval", "recall@k against a random distractor pool");
  eval_common.attach(ev, false);
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--pairs", ev_pairs, "query/engaged pairs")->required()->check(CLI::ExistingFile);
  ev->add_option("--features", ev_features, "features file")->required()->check(CLI::ExistingFile);
  ev->add_option("--neighbors", ev_neighbors, "neighbor table")->required()->check(CLI::ExistingFile);
  ev->add_option("--pool-size", ev_pool, "distractor pool size")->capture_default_str();
  ev->add_option("--k", ev_k, "cutoff")->capture_default_str();
  ev->add_option("--dump-ranks", ev_dump, "write per-pair ranks here");
  ev->add_option("--report", ev_report, "write metric<TAB>value rows here");

  // ablate
  Common ab_common;
  std::string ab_out;
  std::vector<std::string> ab_graphs;
  auto* ab = app.add_subcommand("ablate", "train/eval over graph subsets");
  ab_common.attach(ab, true);
  ab->add_option("--graphs", ab_graphs, "comma-separated graph ids (repeatable)")->required();
  ab->add_option("--out-dir", ab_out, "output directory")->required();

  // pipeline
  Common pl_common;
  std::string pl_out;
  auto* pl = app.add_subcommand("pipeline", "gen-synth -> prune -> walk -> train -> eval");
  pl_common.attach(pl, true);
  pl->add_option("--out-dir", pl_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen) {
      const mb::PipelineConfig cfg = gen_common.resolve();
      cfg.synth.validate();
      mb::write_corpus(mb::gen_corpus(cfg.synth), gen_out);
      std::cout << "wrote corpus to " << gen_out << '\n';
    } else if (*bg) {
      const mb::BipartiteGraph g = mb::load_edges(bg_edges, bg_id);
      g.validate();
      std::cout << "pins\t" << g.num_pins() << "\nctx\t" << g.num_ctx() << "\nedges\t" << g.edge_count()
                << '\n';
      if (!bg_out.empty()) mb::save_edges(g, bg_out);
    } else if (*pr) {
      mb::PruneConfig cfg = mb::parse_prune_spec(pr_spec, prune_common.seed.value_or(0));
      if (pr_rule == "degree_scaled") {
        cfg.rule = mb::PruneRule::kDegreeScaled;
      } else if (pr_rule != "min_degree_scaled") {
        throw mb::ConfigError("unknown prune rule '" + pr_rule + "'");
      }
      const mb::BipartiteGraph g = mb::prune_file(pr_edges, pr_id, cfg, true, pr_out);
      std::cout << "edges\t" << g.edge_count() << '\n';
    } else if (*wk) {
      wk_cfg.seed = walk_common.seed.value_or(0);
      wk_cfg.threads = walk_common.threads.value_or(0);
      std::vector<int> ids;
      if (wk_ids.empty()) {
        for (std::size_t i = 0; i < wk_graphs.size(); ++i) ids.push_back(static_cast<int>(i));
      } else {
        ids = parse_ids(wk_ids);
      }
      if (ids.size() != wk_graphs.size()) throw mb::ConfigError("--graph-ids must list one id per --graph");
      std::vector<mb::BipartiteGraph> graphs;
      for (std::size_t i = 0; i < ids.size(); ++i) graphs.push_back(mb::load_edges(wk_graphs[i], ids[i]));
      const mb::NeighborTable t = mb::walk_graphs(graphs, wk_cfg, wk_out);
      std::cout << "lists\t" << t.size() << '\n';
    } else if (*tr) {
      mb::PipelineConfig cfg = train_common.resolve();
      if (tr_steps) cfg.train.steps = *tr_steps;
      const mb::ArtifactPaths paths{tr_out};
      const mb::FeatureStore features = mb::load_features(tr_features.empty() ? paths.features() : tr_features);
      cfg.synth.visual_dim = features.visual_dim();
      cfg.synth.text_dim = features.text_dim();
      cfg.finalize();
      cfg.model.validate();
      cfg.train.validate();
      const mb::NeighborTable table = mb::load_neighbor_table(tr_neighbors.empty() ? paths.neighbors() : tr_neighbors);
      mb::TrainInputs in{&features, &table, mb::load_pairs(tr_pairs.empty() ? paths.train_pairs() : tr_pairs), {}};
      if (!tr_test_pairs.empty()) in.test_pairs = mb::load_pairs(tr_test_pairs);
      std::optional<mb::TrainState> resume;
      if (!tr_resume.empty()) resume = mb::load_checkpoint(tr_resume);
      const mb::TrainState s = mb::train_model(cfg, in, tr_out, resume ? &*resume : nullptr);
      std::cout << "trained to step " << s.step << "; checkpoint " << paths.checkpoint() << '\n';
    } else if (*ev) {
      mb::EvalConfig cfg;
      cfg.k = ev_k;
      cfg.pool_size = ev_pool;
      cfg.seed = eval_common.seed.value_or(0);
      cfg.threads = eval_common.threads.value_or(0);
      const mb::TrainState state = mb::load_checkpoint(ev_ckpt);
      const mb::FeatureStore features = mb::load_features(ev_features);
      const mb::NeighborTable table = mb::load_neighbor_table(ev_neighbors);
      const std::vector<mb::Pair> pairs = mb::load_pairs(ev_pairs);
      const mb::EvalResult r = mb::evaluate_model(state, features, table, pairs, cfg);
      print_report(r, cfg.k);
      if (!ev_report.empty()) {
        mb::write_report(ev_report, mb::eval_report_rows(r, cfg, std::min(cfg.pool_size, features.size())));
      }
      if (!ev_dump.empty()) mb::dump_ranks(pairs, r, cfg.k, ev_dump);
    } else if (*ab) {
      const mb::PipelineConfig cfg = ab_common.resolve();
      std::vector<std::vector<int>> subsets;
      for (const auto& s : ab_graphs) subsets.push_back(parse_ids(s));
      const auto rows = mb::run_ablation(cfg, subsets, ab_out);
      for (const auto& [subset, r] : rows) {
        std::string label;
        for (int g : subset) label += (label.empty() ? "" : ",") + std::to_string(g);
        std::cout << label << '\t' << r.recall << '\n';
      }
    } else if (*pl) {
      const mb::PipelineConfig cfg = pl_common.resolve();
      const mb::EvalResult r = mb::run_pipeline(cfg, pl_out);
      print_report(r, cfg.eval.k);
    }
  } catch (const mb::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const mb::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternalError;
  }
  return 0;
}
