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

#include "multibisage/model.h"

#include <algorithm>
#include <cmath>
#include <memory>

namespace multibisage {

namespace {

constexpr std::pair<Variant, std::string_view> kVariantNames[] = {
    {Variant::kMultiBiSage, "multibisage"},
    {Variant::kTransformer, "transformer"},
    {Variant::kSharedTransformer, "shared_transformer"},
    {Variant::kNFfn, "nffn"},
    {Variant::kNSum, "nsum"},
    {Variant::kNHadamard, "nhadamard"},
    {Variant::kPinFeatToLast, "pinfeat_to_last"},
    {Variant::kAggregateByFfn, "aggregate_by_ffn"},
};

}  // namespace

std::string_view variant_name(Variant v) {
  for (const auto& [value, name] : kVariantNames) {
    if (value == v) return name;
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [value, n] : kVariantNames) {
    if (n == name) return value;
  }
  throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = [] {
    std::vector<Variant> out;
    for (const auto& [value, _] : kVariantNames) out.push_back(value);
    return out;
  }();
  return v;
}

std::string_view encoder_mode_name(EncoderMode m) {
  return m == EncoderMode::kAttentionOnly ? "attention_only" : "full_block";
}

EncoderMode parse_encoder_mode(std::string_view name) {
  if (name == "attention_only") return EncoderMode::kAttentionOnly;
  if (name == "full_block") return EncoderMode::kFullBlock;
  throw ConfigError("unknown encoder mode '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (num_graphs < 1) throw ConfigError("model: k must be >= 1");
  if (visual_dim < 1 || text_dim < 1 || token_dim < 1 || embed_dim < 1) {
    throw ConfigError("model: feature and embedding widths must be >= 1");
  }
  if (heads < 1) throw ConfigError("model: head count must be >= 1");
  if (token_dim % heads != 0) {
    throw ConfigError("model: d_h=" + std::to_string(token_dim) +
                      " not divisible by H=" + std::to_string(heads));
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("model: d=" + std::to_string(embed_dim) +
                      " not divisible by H=" + std::to_string(heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must lie in [0, 1)");
  if (!(logit_scale > 0.0)) throw ConfigError("model: logit_scale must be > 0");
}

// --- parameters -------------------------------------------------------------

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

std::size_t ModelParams::num_values() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(num_values());
  for_each([&](const std::string&, const Tensor& t) {
    out.insert(out.end(), t.values().begin(), t.values().end());
  });
  return out;
}

void ModelParams::unflatten(std::span<const double> values) {
  if (values.size() != num_values()) throw ConfigError("unflatten: size mismatch");
  std::size_t off = 0;
  for_each([&](const std::string&, Tensor& t) {
    std::copy(values.begin() + off, values.begin() + off + t.size(), t.data());
    off += t.size();
  });
}

ModelParams& ModelParams::operator+=(const ModelParams& o) {
  std::vector<const Tensor*> rhs;
  o.for_each([&](const std::string&, const Tensor& t) { rhs.push_back(&t); });
  std::size_t i = 0;
  for_each([&](const std::string&, Tensor& t) {
    if (i >= rhs.size()) throw ConfigError("ModelParams +=: layout mismatch");
    t += *rhs[i++];
  });
  return *this;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  std::vector<std::pair<std::string, const Tensor*>> lhs, rhs;
  a.for_each([&](const std::string& n, const Tensor& t) { lhs.emplace_back(n, &t); });
  b.for_each([&](const std::string& n, const Tensor& t) { rhs.emplace_back(n, &t); });
  if (lhs.size() != rhs.size()) return false;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (lhs[i].first != rhs[i].first || !(*lhs[i].second == *rhs[i].second)) return false;
  }
  return true;
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(mix64(seed)) {}

  Tensor glorot(std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor t = Tensor::matrix(fan_in, fan_out);
    for (double& v : t.values()) v = u(rng_);
    return t;
  }
  Dense dense(std::size_t in, std::size_t out) { return {glorot(in, out), Tensor::vector(out)}; }
  Tensor token(std::size_t width) {
    std::normal_distribution<double> n(0.0, 0.02);
    Tensor t = Tensor::matrix(1, width);
    for (double& v : t.values()) v = n(rng_);
    return t;
  }
  Encoder encoder(std::size_t d_in, std::size_t d_out, std::size_t heads, EncoderMode mode) {
    Encoder e;
    e.attn.heads = heads;
    e.attn.wq = glorot(d_in, d_in);
    e.attn.wk = glorot(d_in, d_in);
    e.attn.wv = glorot(d_in, d_in);
    if (mode == EncoderMode::kAttentionOnly) {
      e.attn.wo = glorot(d_in, d_out);
    } else {
      e.attn.wo = glorot(d_in, d_in);
      e.ln_gain = Tensor::vector(d_in, 1.0);
      e.ln_bias = Tensor::vector(d_in, 0.0);
      e.proj = dense(d_in, d_out);
    }
    return e;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Initializer init(seed);
  const std::size_t k = cfg.num_graphs, dv = cfg.visual_dim, dt = cfg.text_dim;
  const std::size_t dh = cfg.token_dim, d = cfg.embed_dim, heads = cfg.heads;
  ModelParams p;
  p.graphs.resize(k);

  auto full_graph = [&](GraphParams& g, bool with_pin, bool with_encoder) {
    if (with_pin) {
      g.pin_visual = init.dense(dv, dh);
      g.pin_text = init.dense(dt, dh);
    }
    g.nbr_visual = init.dense(dv, dh);
    g.nbr_text = init.dense(dt, dh);
    g.global_token = init.token(dh);
    if (with_encoder) g.encoder = init.encoder(dh, d, heads, cfg.encoder_mode);
  };
  auto add_aggregator = [&] {
    p.agg_global = init.token(d);
    p.aggregator = init.encoder(d, d, heads, cfg.encoder_mode);
  };

  switch (cfg.variant) {
    case Variant::kMultiBiSage:
    case Variant::kAggregateByFfn:
      for (auto& g : p.graphs) full_graph(g, true, true);
      if (cfg.variant == Variant::kMultiBiSage) {
        add_aggregator();
      } else {
        p.agg_hidden = init.dense(k * d, d);
        p.agg_out = init.dense(d, d);
      }
      break;
    case Variant::kSharedTransformer:
      for (std::size_t i = 0; i < k; ++i) full_graph(p.graphs[i], true, i == 0);
      add_aggregator();
      break;
    case Variant::kTransformer:
    case Variant::kNSum:
    case Variant::kNHadamard:
    case Variant::kNFfn:
      full_graph(p.graphs[0], true, true);
      for (std::size_t i = 1; i < k; ++i) {
        p.graphs[i].nbr_visual = init.dense(dv, dh);
        p.graphs[i].nbr_text = init.dense(dt, dh);
      }
      if (cfg.variant == Variant::kNFfn) {
        p.mix_visual = init.dense(k * dh, dh);
        p.mix_text = init.dense(k * dh, dh);
      }
      break;
    case Variant::kPinFeatToLast:
      for (auto& g : p.graphs) full_graph(g, false, true);
      p.last_visual = init.dense(dv, d);
      p.last_text = init.dense(dt, d);
      add_aggregator();
      break;
  }
  return p;
}

void PinContext::validate(const ModelConfig& cfg) const {
  auto fail = [&](const std::string& what) {
    throw ConfigError("pin " + std::to_string(pin) + " context: " + what);
  };
  if (visual.size() != cfg.visual_dim || text.size() != cfg.text_dim) fail("pin feature width");
  if (graphs.size() != cfg.num_graphs) fail("expected one neighbor block per graph");
  for (const auto& g : graphs) {
    if (g.mask.size() != cfg.neighbors) fail("mask length != n");
    if (g.visual.size() != cfg.neighbors * cfg.visual_dim ||
        g.text.size() != cfg.neighbors * cfg.text_dim) {
      fail("neighbor feature shape");
    }
  }
}

// --- tape ops -----------------------------------------------------------------

namespace {

using Id = Tape::Id;

struct Builder {
  Tape& tape;
  const ModelConfig& cfg;
  ModelParams* grads;
  std::mt19937_64* rng;
  ForwardStats* stats;

  Id dense(Id x, const Dense& p, Dense* g, bool relu) {
    Tensor y = relu ? ffn_forward(tape.value(x), p.w, p.b)
                    : linear_forward(tape.value(x), p.w, p.b);
    Tensor keep;
    if (relu && rng != nullptr && cfg.dropout > 0.0) {
      std::bernoulli_distribution drop(cfg.dropout);
      const double scale = 1.0 / (1.0 - cfg.dropout);
      keep = y.zeros_like();
      for (std::size_t i = 0; i < y.size(); ++i) {
        keep[i] = drop(*rng) ? 0.0 : scale;
        y[i] *= keep[i];
      }
    }
    return tape.push(std::move(y), [x, &p, g, relu, keep = std::move(keep)](Tape& t, Id self) {
      Tensor dy = t.grad(self);
      if (!keep.empty()) {
        for (std::size_t i = 0; i < dy.size(); ++i) dy[i] *= keep[i];
      }
      Tensor dx;
      Tensor* dxp = t.needs_grad(x) ? &dx : nullptr;
      if (relu) {
        ffn_backward(t.value(x), p.w, t.value(self), dy, dxp, g->w, g->b);
      } else {
        linear_backward(t.value(x), p.w, dy, dxp, g->w, g->b);
      }
      if (dxp != nullptr) t.accumulate(x, dx);
    });
  }

  Id param_row(const Tensor& value, Tensor* g) {
    return tape.push(value, [g](Tape& t, Id self) { *g += t.grad(self); });
  }

  Id concat_rows(const std::vector<Id>& parts) {
    const std::size_t cols = tape.value(parts.front()).cols();
    std::size_t rows = 0;
    for (Id p : parts) {
      if (tape.value(p).cols() != cols) throw ConfigError("concat_rows: width mismatch");
      rows += tape.value(p).rows();
    }
    Tensor out = Tensor::matrix(rows, cols);
    std::size_t off = 0;
    for (Id p : parts) {
      const Tensor& v = tape.value(p);
      std::copy(v.data(), v.data() + v.size(), out.data() + off);
      off += v.size();
    }
    return tape.push(std::move(out), [parts](Tape& t, Id self) {
      const Tensor& g = t.grad(self);
      std::size_t off = 0;
      for (Id p : parts) {
        const Tensor& v = t.value(p);
        if (t.needs_grad(p)) {
          Tensor gp = v.zeros_like();
          std::copy(g.data() + off, g.data() + off + v.size(), gp.data());
          t.accumulate(p, gp);
        }
        off += v.size();
      }
    });
  }

  // Concatenates same-height matrices side by side; rows whose mask entry
  // is 0 contribute zeros.
  Id concat_cols(const std::vector<Id>& parts,
                 const std::vector<const std::vector<std::uint8_t>*>& masks = {}) {
    const std::size_t rows = tape.value(parts.front()).rows();
    std::size_t cols = 0;
    for (Id p : parts) cols += tape.value(p).cols();
    Tensor out = Tensor::matrix(rows, cols);
    std::size_t c0 = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const Tensor& v = tape.value(parts[i]);
      for (std::size_t r = 0; r < rows; ++r) {
        if (!masks.empty() && !(*masks[i])[r]) continue;
        std::copy(v.data() + r * v.cols(), v.data() + (r + 1) * v.cols(),
                  out.data() + r * cols + c0);
      }
      c0 += v.cols();
    }
    return tape.push(std::move(out), [parts, masks](Tape& t, Id self) {
      const Tensor& g = t.grad(self);
      std::size_t c0 = 0;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        const Tensor& v = t.value(parts[i]);
        if (t.needs_grad(parts[i])) {
          Tensor gp = v.zeros_like();
          for (std::size_t r = 0; r < v.rows(); ++r) {
            if (!masks.empty() && !(*masks[i])[r]) continue;
            std::copy(g.data() + r * g.cols() + c0, g.data() + r * g.cols() + c0 + v.cols(),
                      gp.data() + r * v.cols());
          }
          t.accumulate(parts[i], gp);
        }
        c0 += v.cols();
      }
    });
  }

  Id select_row(Id x, std::size_t r) {
    const Tensor& v = tape.value(x);
    Tensor out = Tensor::matrix(1, v.cols());
    std::copy(v.data() + r * v.cols(), v.data() + (r + 1) * v.cols(), out.data());
    return tape.push(std::move(out), [x, r](Tape& t, Id self) {
      Tensor gx = t.value(x).zeros_like();
      const Tensor& g = t.grad(self);
      std::copy(g.data(), g.data() + g.size(), gx.data() + r * gx.cols());
      t.accumulate(x, gx);
    });
  }

  Id add(Id a, Id b) {
    Tensor out = tape.value(a);
    out += tape.value(b);
    return tape.push(std::move(out), [a, b](Tape& t, Id self) {
      const Tensor g = t.grad(self);
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  Id mha(Id xq, Id xkv, const AttentionParams& p, AttentionParams* g,
         std::vector<std::uint8_t> mask) {
    auto cache = std::make_shared<MultiheadCache>();
    Tensor out = multihead(tape.value(xq), tape.value(xkv), p, mask,
                           tape.recording() ? cache.get() : nullptr);
    return tape.push(std::move(out), [xq, xkv, &p, g, cache](Tape& t, Id self) {
      Tensor dxq, dxkv;
      multihead_backward(*cache, p, t.grad(self), dxq, dxkv, *g);
      t.accumulate(xq, dxq);
      t.accumulate(xkv, dxkv);
    });
  }

  Id layer_norm_op(Id x, const Tensor& gain, const Tensor& bias, Tensor* dgain, Tensor* dbias) {
    auto cache = std::make_shared<LayerNormCache>();
    Tensor out = layer_norm(tape.value(x), gain, bias, cache.get());
    return tape.push(std::move(out), [x, &gain, dgain, dbias, cache](Tape& t, Id self) {
      Tensor dx;
      layer_norm_backward(*cache, gain, t.grad(self), dx, *dgain, *dbias);
      t.accumulate(x, dx);
    });
  }

  Id l2norm(Id x) {
    Tensor y = l2_normalize(tape.value(x));
    return tape.push(std::move(y), [x](Tape& t, Id self) {
      t.accumulate(x, l2_normalize_backward(t.value(x), t.value(self), t.grad(self)));
    });
  }

  enum class Combine { kSum, kProduct };

  // Rank-wise combination of n x w token matrices across graphs. Only rows a
  // graph actually has take part; a rank missing everywhere yields zeros.
  Id combine(const std::vector<Id>& mats, const std::vector<const std::vector<std::uint8_t>*>& masks,
             Combine mode) {
    const Tensor& first = tape.value(mats.front());
    const std::size_t rows = first.rows(), cols = first.cols();
    Tensor out = Tensor::matrix(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      bool any = false;
      for (std::size_t i = 0; i < mats.size(); ++i) {
        if (!(*masks[i])[r]) continue;
        const double* row = tape.value(mats[i]).data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
          double& o = out(r, c);
          if (mode == Combine::kSum) {
            o += row[c];
          } else {
            o = any ? o * row[c] : row[c];
          }
        }
        any = true;
      }
    }
    return tape.push(std::move(out), [mats, masks, mode, rows, cols](Tape& t, Id self) {
      const Tensor& g = t.grad(self);
      for (std::size_t i = 0; i < mats.size(); ++i) {
        if (!t.needs_grad(mats[i])) continue;
        Tensor gi = Tensor::matrix(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
          if (!(*masks[i])[r]) continue;
          for (std::size_t c = 0; c < cols; ++c) {
            double factor = 1.0;
            if (mode == Combine::kProduct) {
              for (std::size_t j = 0; j < mats.size(); ++j) {
                if (j != i && (*masks[j])[r]) factor *= t.value(mats[j])(r, c);
              }
            }
            gi(r, c) = g(r, c) * factor;
          }
        }
        t.accumulate(mats[i], gi);
      }
    });
  }

  // Runs an encoder over `seq` and returns the global-token (row 0) output.
  Id encode(Id seq, const std::vector<std::uint8_t>& mask, const Encoder& e, Encoder* ge) {
    if (stats != nullptr) stats->sequence_lengths.push_back(tape.value(seq).rows());
    AttentionParams* gattn = ge != nullptr ? &ge->attn : nullptr;
    if (cfg.encoder_mode == EncoderMode::kAttentionOnly) {
      return mha(select_row(seq, 0), seq, e.attn, gattn, mask);
    }
    Id normed = layer_norm_op(seq, e.ln_gain, e.ln_bias, ge ? &ge->ln_gain : nullptr,
                              ge ? &ge->ln_bias : nullptr);
    Id attended = mha(select_row(normed, 0), normed, e.attn, gattn, mask);
    Id residual = add(select_row(seq, 0), attended);
    return dense(residual, e.proj, ge ? &ge->proj : nullptr, false);
  }
};

template <class T>
T* grad_of(ModelParams* grads, T ModelParams::*member) {
  return grads ? &(grads->*member) : nullptr;
}

GraphParams* graph_grads(ModelParams* grads, std::size_t i) {
  return grads ? &grads->graphs[i] : nullptr;
}

struct Inputs {
  Id visual, text;
  std::vector<Id> nbr_visual, nbr_text;
};

Inputs make_inputs(Tape& tape, const PinContext& ctx, const ModelConfig& cfg) {
  Inputs in;
  auto as_matrix = [](const Tensor& t, std::size_t rows, std::size_t cols) {
    return Tensor::from_values({rows, cols}, std::vector<double>(t.values().begin(), t.values().end()));
  };
  in.visual = tape.leaf(as_matrix(ctx.visual, 1, cfg.visual_dim));
  in.text = tape.leaf(as_matrix(ctx.text, 1, cfg.text_dim));
  for (const auto& g : ctx.graphs) {
    in.nbr_visual.push_back(tape.leaf(as_matrix(g.visual, cfg.neighbors, cfg.visual_dim)));
    in.nbr_text.push_back(tape.leaf(as_matrix(g.text, cfg.neighbors, cfg.text_dim)));
  }
  return in;
}

std::vector<std::uint8_t> seq_mask(std::size_t fixed, std::initializer_list<const std::vector<std::uint8_t>*> blocks) {
  std::vector<std::uint8_t> m(fixed, 1);
  for (const auto* b : blocks) m.insert(m.end(), b->begin(), b->end());
  return m;
}

// Per-graph sequence: [global token; FFN(pin visual); FFN(pin text); neighbor visual rows; neighbor text rows]
// through `encoder`. With `pin_tokens` false the two pin tokens are omitted.
Id graph_embedding(Builder& b, const Inputs& in, const PinContext& ctx, std::size_t i,
                   const ModelParams& params, const Encoder& encoder, Encoder* gencoder,
                   bool pin_tokens) {
  const GraphParams& gp = params.graphs[i];
  GraphParams* gg = graph_grads(b.grads, i);
  std::vector<Id> parts{b.param_row(gp.global_token, gg ? &gg->global_token : nullptr)};
  if (pin_tokens) {
    parts.push_back(b.dense(in.visual, gp.pin_visual, gg ? &gg->pin_visual : nullptr, true));
    parts.push_back(b.dense(in.text, gp.pin_text, gg ? &gg->pin_text : nullptr, true));
  }
  parts.push_back(b.dense(in.nbr_visual[i], gp.nbr_visual, gg ? &gg->nbr_visual : nullptr, true));
  parts.push_back(b.dense(in.nbr_text[i], gp.nbr_text, gg ? &gg->nbr_text : nullptr, true));
  const auto& mask = ctx.graphs[i].mask;
  return b.encode(b.concat_rows(parts), seq_mask(pin_tokens ? 3 : 1, {&mask, &mask}), encoder,
                  gencoder);
}

Id aggregator_embedding(Builder& b, std::vector<Id> tokens, const ModelParams& params) {
  tokens.insert(tokens.begin(), b.param_row(params.agg_global, grad_of(b.grads, &ModelParams::agg_global)));
  const std::vector<std::uint8_t> mask(tokens.size(), 1);
  Id out = b.encode(b.concat_rows(tokens), mask, params.aggregator,
                    grad_of(b.grads, &ModelParams::aggregator));
  return b.l2norm(out);
}

// Variants with a single first-level encoder over pooled neighbor tokens.
Id single_encoder_embedding(Builder& b, const Inputs& in, const PinContext& ctx,
                            const ModelParams& params) {
  const ModelConfig& cfg = b.cfg;
  const std::size_t k = cfg.num_graphs;
  const GraphParams& g0 = params.graphs[0];
  GraphParams* gg0 = graph_grads(b.grads, 0);

  std::vector<Id> vis, txt;
  std::vector<const std::vector<std::uint8_t>*> masks;
  for (std::size_t i = 0; i < k; ++i) {
    const GraphParams& gp = params.graphs[i];
    GraphParams* gg = graph_grads(b.grads, i);
    vis.push_back(b.dense(in.nbr_visual[i], gp.nbr_visual, gg ? &gg->nbr_visual : nullptr, true));
    txt.push_back(b.dense(in.nbr_text[i], gp.nbr_text, gg ? &gg->nbr_text : nullptr, true));
    masks.push_back(&ctx.graphs[i].mask);
  }

  std::vector<Id> parts{b.param_row(g0.global_token, gg0 ? &gg0->global_token : nullptr),
                        b.dense(in.visual, g0.pin_visual, gg0 ? &gg0->pin_visual : nullptr, true),
                        b.dense(in.text, g0.pin_text, gg0 ? &gg0->pin_text : nullptr, true)};
  std::vector<std::uint8_t> mask(3, 1);

  if (cfg.variant == Variant::kTransformer) {
    for (std::size_t i = 0; i < k; ++i) {
      parts.push_back(vis[i]);
      mask.insert(mask.end(), masks[i]->begin(), masks[i]->end());
    }
    for (std::size_t i = 0; i < k; ++i) {
      parts.push_back(txt[i]);
      mask.insert(mask.end(), masks[i]->begin(), masks[i]->end());
    }
  } else {
    std::vector<std::uint8_t> any(cfg.neighbors, 0);
    for (const auto* m : masks) {
      for (std::size_t r = 0; r < cfg.neighbors; ++r) any[r] |= (*m)[r];
    }
    Id v, t;
    if (cfg.variant == Variant::kNFfn) {
      v = b.dense(b.concat_cols(vis, masks), params.mix_visual,
                  grad_of(b.grads, &ModelParams::mix_visual), true);
      t = b.dense(b.concat_cols(txt, masks), params.mix_text,
                  grad_of(b.grads, &ModelParams::mix_text), true);
    } else {
      const auto mode = cfg.variant == Variant::kNSum ? Builder::Combine::kSum
                                                      : Builder::Combine::kProduct;
      v = b.combine(vis, masks, mode);
      t = b.combine(txt, masks, mode);
    }
    parts.push_back(v);
    parts.push_back(t);
    mask.insert(mask.end(), any.begin(), any.end());
    mask.insert(mask.end(), any.begin(), any.end());
  }
  Id out = b.encode(b.concat_rows(parts), mask, g0.encoder, gg0 ? &gg0->encoder : nullptr);
  return b.l2norm(out);
}

}  // namespace

Tape::Id build_embedding(Tape& tape, const PinContext& ctx, const ModelParams& params,
                         const ModelConfig& cfg, const ForwardOptions& opts) {
  ctx.validate(cfg);
  if (tape.recording() && opts.grads == nullptr) {
    throw ConfigError("build_embedding: a recording tape needs gradient buffers");
  }
  Builder b{tape, cfg, opts.grads, opts.dropout_rng, opts.stats};
  const Inputs in = make_inputs(tape, ctx, cfg);
  const std::size_t k = cfg.num_graphs;

  switch (cfg.variant) {
    case Variant::kMultiBiSage:
    case Variant::kSharedTransformer: {
      const bool shared = cfg.variant == Variant::kSharedTransformer;
      std::vector<Id> per_graph;
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t e = shared ? 0 : i;
        per_graph.push_back(graph_embedding(b, in, ctx, i, params, params.graphs[e].encoder,
                                            b.grads ? &b.grads->graphs[e].encoder : nullptr,
                                            true));
      }
      return aggregator_embedding(b, per_graph, params);
    }
    case Variant::kPinFeatToLast: {
      std::vector<Id> tokens{
          b.dense(in.visual, params.last_visual, grad_of(b.grads, &ModelParams::last_visual), true),
          b.dense(in.text, params.last_text, grad_of(b.grads, &ModelParams::last_text), true)};
      for (std::size_t i = 0; i < k; ++i) {
        tokens.push_back(graph_embedding(b, in, ctx, i, params, params.graphs[i].encoder,
                                         b.grads ? &b.grads->graphs[i].encoder : nullptr,
                                         false));
      }
      return aggregator_embedding(b, tokens, params);
    }
    case Variant::kAggregateByFfn: {
      std::vector<Id> per_graph;
      for (std::size_t i = 0; i < k; ++i) {
        per_graph.push_back(graph_embedding(b, in, ctx, i, params, params.graphs[i].encoder,
                                            b.grads ? &b.grads->graphs[i].encoder : nullptr,
                                            true));
      }
      Id hidden = b.dense(b.concat_cols(per_graph), params.agg_hidden,
                          grad_of(b.grads, &ModelParams::agg_hidden), true);
      Id out = b.dense(hidden, params.agg_out, grad_of(b.grads, &ModelParams::agg_out), false);
      return b.l2norm(out);
    }
    case Variant::kTransformer:
    case Variant::kNSum:
    case Variant::kNHadamard:
    case Variant::kNFfn:
      return single_encoder_embedding(b, in, ctx, params);
  }
  throw ConfigError("unhandled variant");
}

Tensor encode_graph_context(const PinContext& ctx, std::size_t graph, const ModelParams& params,
                            const ModelConfig& cfg, ForwardStats* stats) {
  ctx.validate(cfg);
  if (graph >= cfg.num_graphs) throw ConfigError("encode_graph_context: graph index out of range");
  Tape tape(false);
  Builder b{tape, cfg, nullptr, nullptr, stats};
  const Inputs in = make_inputs(tape, ctx, cfg);
  const Encoder& enc = cfg.variant == Variant::kSharedTransformer ? params.graphs[0].encoder
                                                                  : params.graphs[graph].encoder;
  const bool pin_tokens = cfg.variant != Variant::kPinFeatToLast;
  return tape.value(graph_embedding(b, in, ctx, graph, params, enc, nullptr, pin_tokens));
}

Tensor aggregate(std::span<const Tensor> per_graph, const ModelParams& params,
                 const ModelConfig& cfg, ForwardStats* stats) {
  if (per_graph.size() != cfg.num_graphs) {
    throw ConfigError("aggregate: expected " + std::to_string(cfg.num_graphs) +
                      " per-graph embeddings, got " + std::to_string(per_graph.size()));
  }
  Tape tape(false);
  Builder b{tape, cfg, nullptr, nullptr, stats};
  std::vector<Id> tokens;
  for (const Tensor& t : per_graph) {
    if (t.size() != cfg.embed_dim) throw ConfigError("aggregate: embedding width != d");
    tokens.push_back(tape.leaf(Tensor::from_values({1, cfg.embed_dim},
                                                   std::vector<double>(t.values().begin(), t.values().end()))));
  }
  return tape.value(aggregator_embedding(b, tokens, params));
}

Tensor forward(const PinContext& ctx, const ModelParams& params, const ModelConfig& cfg) {
  if (cfg.variant != Variant::kMultiBiSage) throw ConfigError("forward: variant must be multibisage");
  return variant_forward(ctx, params, cfg);
}

Tensor variant_forward(const PinContext& ctx, const ModelParams& params, const ModelConfig& cfg,
                       ForwardStats* stats) {
  Tape tape(false);
  ForwardOptions opts;
  opts.stats = stats;
  return tape.value(build_embedding(tape, ctx, params, cfg, opts));
}

}  // namespace multibisage
