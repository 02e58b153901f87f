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
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "multibisage/common.h"
#include "multibisage/ops.h"
#include "multibisage/tape.h"
#include "multibisage/tensor.h"

namespace multibisage {

enum class Variant {
  kMultiBiSage,
  kTransformer,
  kSharedTransformer,
  kNFfn,
  kNSum,
  kNHadamard,
  kPinFeatToLast,
  kAggregateByFfn,
};

enum class EncoderMode {
  kAttentionOnly,  // softmax attention + W^O, projecting width d_in -> d_out
  kFullBlock,      // pre-norm attention with residual, then a d_in -> d_out projection
};

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
const std::vector<Variant>& all_variants();
std::string_view encoder_mode_name(EncoderMode m);
EncoderMode parse_encoder_mode(std::string_view name);

struct ModelConfig {
  std::size_t num_graphs = 3;    // k
  std::size_t neighbors = 10;    // n, per graph
  std::size_t visual_dim = 16;   // d_v
  std::size_t text_dim = 8;      // d_t
  std::size_t token_dim = 16;    // d_h
  std::size_t embed_dim = 16;    // d
  std::size_t heads = 2;         // H
  Variant variant = Variant::kMultiBiSage;
  EncoderMode encoder_mode = EncoderMode::kAttentionOnly;
  double dropout = 0.0;
  double logit_scale = 1.0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  /// Tokens per graph sequence: global + pin visual + pin text + 2n neighbors.
  std::size_t graph_sequence_length() const { return 1 + 2 * (1 + neighbors); }
  /// Aggregator sequence: global + one token per graph.
  std::size_t aggregator_sequence_length() const { return 1 + num_graphs; }
};

struct Dense {
  Tensor w, b;
};

struct Encoder {
  AttentionParams attn;
  Tensor ln_gain, ln_bias;  // full block only
  Dense proj;               // full block only
};

struct GraphParams {
  Dense pin_visual, pin_text;  // pin feature FFNs
  Dense nbr_visual, nbr_text;  // neighbor feature FFNs
  Tensor global_token;         // 1 x d_h
  Encoder encoder;
};

/// Every learnable tensor. Groups a variant does not use stay empty and are
/// skipped by for_each.
struct ModelParams {
  std::vector<GraphParams> graphs;
  Tensor agg_global;  // aggregator global token, 1 x d
  Encoder aggregator;
  Dense mix_visual, mix_text;    // nffn
  Dense last_visual, last_text;  // pinfeat_to_last
  Dense agg_hidden, agg_out;     // aggregate_by_ffn

  /// Visits non-empty tensors in a fixed order with stable names.
  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  ModelParams zeros_like() const;
  std::size_t num_values() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> values);
  ModelParams& operator+=(const ModelParams& o);
  friend bool operator==(const ModelParams& a, const ModelParams& b);

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f);
};

/// Glorot-uniform weights, zero biases, N(0, 0.02) global tokens, unit
/// layer-norm gains.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct GraphNeighbors {
  Tensor visual;                    // n x d_v, zero rows where masked
  Tensor text;                      // n x d_t
  std::vector<std::uint8_t> mask;   // n entries, 1 = real neighbor
};

struct PinContext {
  NodeId pin = 0;
  Tensor visual;  // 1 x d_v
  Tensor text;    // 1 x d_t
  std::vector<GraphNeighbors> graphs;

  void validate(const ModelConfig& cfg) const;
};

/// Sequence lengths actually fed to each encoder during a forward pass, in
/// call order (first-level encoders, then the aggregator when present).
struct ForwardStats {
  std::vector<std::size_t> sequence_lengths;
};

struct ForwardOptions {
  ModelParams* grads = nullptr;      // when set, the tape records backward
  std::mt19937_64* dropout_rng = nullptr;  // dropout is active only when set
  ForwardStats* stats = nullptr;
};

/// Runs the configured variant on `tape` and returns the node holding the
/// unit-norm 1 x d embedding.
Tape::Id build_embedding(Tape& tape, const PinContext& ctx, const ModelParams& params,
                         const ModelConfig& cfg, const ForwardOptions& opts = {});

/// Per-graph encoder output (1 x d) for the multibisage wiring.
Tensor encode_graph_context(const PinContext& ctx, std::size_t graph,
                            const ModelParams& params, const ModelConfig& cfg,
                            ForwardStats* stats = nullptr);
/// Aggregator over k per-graph embeddings; returns the unit-norm x_p.
Tensor aggregate(std::span<const Tensor> per_graph, const ModelParams& params,
                 const ModelConfig& cfg, ForwardStats* stats = nullptr);
/// MultiBiSage forward; cfg.variant must be kMultiBiSage.
Tensor forward(const PinContext& ctx, const ModelParams& params, const ModelConfig& cfg);
/// Forward for any variant.
Tensor variant_forward(const PinContext& ctx, const ModelParams& params,
                       const ModelConfig& cfg, ForwardStats* stats = nullptr);

// ---------------------------------------------------------------------------

template <class Self, class F>
void ModelParams::visit(Self& self, F& f) {
  auto t = [&](const std::string& name, auto& tensor) {
    if (!tensor.empty()) f(name, tensor);
  };
  auto dense = [&](const std::string& name, auto& d) {
    t(name + ".w", d.w);
    t(name + ".b", d.b);
  };
  auto encoder = [&](const std::string& name, auto& e) {
    t(name + ".wq", e.attn.wq);
    t(name + ".wk", e.attn.wk);
    t(name + ".wv", e.attn.wv);
    t(name + ".wo", e.attn.wo);
    t(name + ".ln_gain", e.ln_gain);
    t(name + ".ln_bias", e.ln_bias);
    dense(name + ".proj", e.proj);
  };
  for (std::size_t i = 0; i < self.graphs.size(); ++i) {
    auto& g = self.graphs[i];
    const std::string p = "graph" + std::to_string(i);
    dense(p + ".pin_visual", g.pin_visual);
    dense(p + ".pin_text", g.pin_text);
    dense(p + ".nbr_visual", g.nbr_visual);
    dense(p + ".nbr_text", g.nbr_text);
    t(p + ".global_token", g.global_token);
    encoder(p + ".encoder", g.encoder);
  }
  t("agg.global_token", self.agg_global);
  encoder("agg.encoder", self.aggregator);
  dense("nffn.mix_visual", self.mix_visual);
  dense("nffn.mix_text", self.mix_text);
  dense("last.pin_visual", self.last_visual);
  dense("last.pin_text", self.last_text);
  dense("aggffn.hidden", self.agg_hidden);
  dense("aggffn.out", self.agg_out);
}

}  // namespace multibisage
