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

#include "multibisage/config.h"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace multibisage {

using nlohmann::json;

std::vector<int> PipelineConfig::graph_ids() const {
  if (!graphs.empty()) return graphs;
  std::vector<int> all(synth.num_graphs());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return all;
}

void PipelineConfig::finalize() {
  synth.seed = seed;
  prune.seed = seed;
  walk.seed = seed;
  walk.threads = threads;
  train.seed = seed;
  train.threads = threads;
  eval.seed = seed;
  eval.threads = threads;
  model.visual_dim = synth.visual_dim;
  model.text_dim = synth.text_dim;
  model.num_graphs = graph_ids().size();
}

void PipelineConfig::validate() const {
  synth.validate();
  if (prune_enabled) prune.validate();
  walk.validate();
  model.validate();
  train.validate();
  eval.validate();
  const auto ids = graph_ids();
  std::set<int> unique(ids.begin(), ids.end());
  if (unique.size() != ids.size()) throw ConfigError("graphs: duplicate graph id");
  for (int g : ids) {
    if (g < 0 || static_cast<std::size_t>(g) >= synth.num_graphs()) {
      throw ConfigError("graphs: id " + std::to_string(g) + " out of range");
    }
  }
  if (ids.size() != model.num_graphs) throw ConfigError("model k does not match the graph list");
}

PipelineConfig preset(std::string_view name) {
  PipelineConfig c;
  if (name == "desk") {
    c.synth = SynthConfig{};
    c.walk.nw = 2000;
    c.walk.alpha = 0.5;
    c.walk.top_k = 50;
    c.model.neighbors = 5;
    c.model.token_dim = 32;
    c.model.embed_dim = 32;
    c.model.heads = 2;
    c.model.logit_scale = 10.0;
    c.train.batch_size = 128;
    c.train.steps = 2000;
    c.eval.pool_size = 5000;
  } else if (name == "paper") {
    c.synth.num_pins = 1000000;
    c.synth.num_ctx = 100000;
    c.synth.visual_dim = 1024;
    c.synth.text_dim = 64;
    c.synth.informativeness = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    c.walk.nw = 10000;
    c.walk.alpha = 0.9;
    c.walk.top_k = 50;
    c.model.neighbors = 50;
    c.model.token_dim = 512;
    c.model.embed_dim = 256;
    c.model.heads = 8;
    c.model.dropout = 0.25;
    c.train.batch_size = 8032;
    c.train.steps = 100000;
    c.eval.pool_size = 1000000;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected desk or paper)");
  }
  c.finalize();
  return c;
}

namespace {

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config: '" + name_ + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& dst) {
    known_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_unsigned()) throw ConfigError("expected a non-negative integer");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer()) throw ConfigError("expected an integer");
      }
      dst = it->get<T>();
    } catch (const std::exception& e) {
      throw ConfigError("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  template <class F>
  void read_with(const char* key, F&& assign) {
    known_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      assign(*it);
    } catch (const ConfigError& e) {
      throw ConfigError("config: " + name_ + "." + key + ": " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!known_.contains(key)) throw ConfigError("config: unknown key '" + name_ + "." + key + "'");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> known_;
};

PruneRule parse_rule(const std::string& s) {
  if (s == "min_degree_scaled") return PruneRule::kMinDegreeScaled;
  if (s == "degree_scaled") return PruneRule::kDegreeScaled;
  throw ConfigError("unknown prune rule '" + s + "'");
}

const char* rule_name(PruneRule r) {
  return r == PruneRule::kMinDegreeScaled ? "min_degree_scaled" : "degree_scaled";
}

}  // namespace

PipelineConfig parse_config(const std::string& json_text, PipelineConfig c) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  Section top(root, "config");
  top.read("seed", c.seed);
  top.read("threads", c.threads);
  top.read("graphs", c.graphs);
  auto sub = [&](const char* key, auto&& fill) {
    top.read_with(key, [&](const json& j) {
      Section s(j, key);
      fill(s);
      s.finish();
    });
  };
  sub("synth", [&](Section& s) {
    s.read("num_pins", c.synth.num_pins);
    s.read("num_ctx", c.synth.num_ctx);
    s.read("clusters", c.synth.clusters);
    s.read("intra_edge_prob", c.synth.intra_edge_prob);
    s.read("inter_edge_noise", c.synth.inter_edge_noise);
    s.read("feature_noise", c.synth.feature_noise);
    s.read("pair_count", c.synth.pair_count);
    s.read("pair_noise", c.synth.pair_noise);
    s.read("visual_dim", c.synth.visual_dim);
    s.read("text_dim", c.synth.text_dim);
    s.read("informativeness", c.synth.informativeness);
  });
  sub("prune", [&](Section& s) {
    s.read("enabled", c.prune_enabled);
    s.read("min_degree", c.prune.min_degree);
    s.read("max_degree", c.prune.max_degree);
    s.read("prune_factor", c.prune.prune_factor);
    s.read_with("rule", [&](const json& j) { c.prune.rule = parse_rule(j.get<std::string>()); });
  });
  sub("walk", [&](Section& s) {
    s.read("nw", c.walk.nw);
    s.read("alpha", c.walk.alpha);
    s.read("top_k", c.walk.top_k);
  });
  sub("model", [&](Section& s) {
    s.read("neighbors", c.model.neighbors);
    s.read("token_dim", c.model.token_dim);
    s.read("embed_dim", c.model.embed_dim);
    s.read("heads", c.model.heads);
    s.read_with("variant", [&](const json& j) { c.model.variant = parse_variant(j.get<std::string>()); });
    s.read_with("encoder_mode",
                [&](const json& j) { c.model.encoder_mode = parse_encoder_mode(j.get<std::string>()); });
    s.read("dropout", c.model.dropout);
    s.read("logit_scale", c.model.logit_scale);
  });
  sub("train", [&](Section& s) {
    s.read("peak_lr", c.train.peak_lr);
    s.read("floor_lr", c.train.floor_lr);
    s.read("batch_size", c.train.batch_size);
    s.read("steps", c.train.steps);
    s.read_with("warmup_steps", [&](const json& j) {
      if (j.is_null()) {
        c.train.warmup_steps.reset();
      } else if (j.is_number_unsigned()) {
        c.train.warmup_steps = j.get<std::size_t>();
      } else {
        throw ConfigError("expected a non-negative integer or null");
      }
    });
    s.read("clip_norm", c.train.clip_norm);
    s.read("sketch_width", c.train.sketch_width);
    s.read("sketch_depth", c.train.sketch_depth);
    s.read("eval_every", c.train.eval_every);
  });
  sub("eval", [&](Section& s) {
    s.read("k", c.eval.k);
    s.read("pool_size", c.eval.pool_size);
  });
  top.finish();
  c.finalize();
  return c;
}

PipelineConfig load_config(const std::string& path, PipelineConfig base) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["graphs"] = c.graph_ids();
  j["synth"] = {{"num_pins", c.synth.num_pins},
                {"num_ctx", c.synth.num_ctx},
                {"clusters", c.synth.clusters},
                {"intra_edge_prob", c.synth.intra_edge_prob},
                {"inter_edge_noise", c.synth.inter_edge_noise},
                {"feature_noise", c.synth.feature_noise},
                {"pair_count", c.synth.pair_count},
                {"pair_noise", c.synth.pair_noise},
                {"visual_dim", c.synth.visual_dim},
                {"text_dim", c.synth.text_dim},
                {"informativeness", c.synth.informativeness}};
  j["prune"] = {{"enabled", c.prune_enabled},
                {"min_degree", c.prune.min_degree},
                {"max_degree", c.prune.max_degree},
                {"prune_factor", c.prune.prune_factor},
                {"rule", rule_name(c.prune.rule)}};
  j["walk"] = {{"nw", c.walk.nw}, {"alpha", c.walk.alpha}, {"top_k", c.walk.top_k}};
  j["model"] = {{"neighbors", c.model.neighbors},
                {"token_dim", c.model.token_dim},
                {"embed_dim", c.model.embed_dim},
                {"heads", c.model.heads},
                {"variant", std::string(variant_name(c.model.variant))},
                {"encoder_mode", std::string(encoder_mode_name(c.model.encoder_mode))},
                {"dropout", c.model.dropout},
                {"logit_scale", c.model.logit_scale}};
  j["train"] = {{"peak_lr", c.train.peak_lr},
                {"floor_lr", c.train.floor_lr},
                {"batch_size", c.train.batch_size},
                {"steps", c.train.steps},
                {"warmup_steps", c.train.warmup()},
                {"clip_norm", c.train.clip_norm},
                {"sketch_width", c.train.sketch_width},
                {"sketch_depth", c.train.sketch_depth},
                {"eval_every", c.train.eval_every}};
  j["eval"] = {{"k", c.eval.k}, {"pool_size", c.eval.pool_size}};
  return j.dump(2);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace multibisage
