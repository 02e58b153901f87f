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

#include "multibisage/loss.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace multibisage {

namespace {

constexpr std::size_t kChunk = 8;

void check_probabilities(std::span<const double> probs, const char* what) {
  for (double p : probs) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw ConfigError(std::string(what) + ": probabilities must lie in (0, 1]");
    }
  }
}

double dot_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  const auto ra = a.row(i), rb = b.row(j);
  double s = 0.0;
  for (std::size_t c = 0; c < ra.size(); ++c) s += ra[c] * rb[c];
  return s;
}

void axpy_row(Tensor& dst, std::size_t i, double alpha, const Tensor& src, std::size_t j) {
  auto rd = dst.row(i);
  const auto rs = src.row(j);
  for (std::size_t c = 0; c < rd.size(); ++c) rd[c] += alpha * rs[c];
}

// Turns logits into softmax probabilities in place; returns log-sum-exp.
double softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
  return m + std::log(s);
}

}  // namespace

double corrected_logit(double dot, double prob, double scale) {
  return scale * dot - std::log(prob);
}

EmbeddingLoss sampled_softmax_loss(const Tensor& xq, const Tensor& xe,
                                   std::span<const double> qp, double scale) {
  const std::size_t n = xq.rows();
  if (n == 0 || xe.rows() != n || qp.size() != n || xq.cols() != xe.cols()) {
    throw ConfigError("sampled_softmax_loss: shape mismatch");
  }
  check_probabilities(qp, "sampled_softmax_loss");
  EmbeddingLoss out{0.0, xq.zeros_like(), xe.zeros_like(), {}};
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) z[j] = corrected_logit(dot_rows(xq, i, xe, j), qp[j], scale);
    const double pos = z[i];
    out.loss += (softmax_inplace(z) - pos) * inv_n;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = (z[j] - (i == j ? 1.0 : 0.0)) * inv_n * scale;
      axpy_row(out.dxq, i, g, xe, j);
      axpy_row(out.dxe, j, g, xq, i);
    }
  }
  return out;
}

EmbeddingLoss mixed_negative_loss(const Tensor& xq, const Tensor& xe, const Tensor& xm,
                                  std::span<const double> qn_pos,
                                  std::span<const double> qn_neg, double scale) {
  const std::size_t n = xq.rows();
  const std::size_t m = xm.empty() ? 0 : xm.rows();
  if (n == 0 || xe.rows() != n || qn_pos.size() != n || qn_neg.size() != m ||
      xq.cols() != xe.cols() || (m > 0 && xm.cols() != xq.cols())) {
    throw ConfigError("mixed_negative_loss: shape mismatch");
  }
  check_probabilities(qn_pos, "mixed_negative_loss");
  check_probabilities(qn_neg, "mixed_negative_loss");
  EmbeddingLoss out{0.0, xq.zeros_like(), xe.zeros_like(),
                    m > 0 ? xm.zeros_like() : Tensor::matrix(0, xq.cols())};
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> z(1 + m);
  for (std::size_t i = 0; i < n; ++i) {
    z[0] = corrected_logit(dot_rows(xq, i, xe, i), qn_pos[i], scale);
    for (std::size_t j = 0; j < m; ++j) z[1 + j] = corrected_logit(dot_rows(xq, i, xm, j), qn_neg[j], scale);
    const double pos = z[0];
    out.loss += (softmax_inplace(z) - pos) * inv_n;
    const double g0 = (z[0] - 1.0) * inv_n * scale;
    axpy_row(out.dxq, i, g0, xe, i);
    axpy_row(out.dxe, i, g0, xq, i);
    for (std::size_t j = 0; j < m; ++j) {
      const double g = z[1 + j] * inv_n * scale;
      axpy_row(out.dxq, i, g, xm, j);
      axpy_row(out.dxm, j, g, xq, i);
    }
  }
  return out;
}

void Batch::validate() const {
  if (queries.empty()) throw ConfigError("batch: no queries");
  if (positives.size() != queries.size()) throw ConfigError("batch: positives not aligned with queries");
}

Tensor embed_all(std::span<const PinContext> contexts, const ModelParams& params,
                 const ModelConfig& cfg, unsigned threads) {
  Tensor out = Tensor::matrix(contexts.size(), cfg.embed_dim);
  parallel_for(contexts.size(), threads, [&](std::size_t i) {
    const Tensor e = variant_forward(contexts[i], params, cfg);
    std::copy(e.data(), e.data() + e.size(), out.data() + i * cfg.embed_dim);
  });
  return out;
}

LossBreakdown combined_loss(const Batch& batch, const ModelParams& params,
                            const ModelConfig& cfg, const CountMinSketch& positive_stream,
                            const CountMinSketch& negative_stream, const LossOptions& opts) {
  batch.validate();
  const std::size_t nb = batch.queries.size(), nm = batch.negatives.size();
  const std::size_t total = 2 * nb + nm;
  auto context = [&](std::size_t i) -> const PinContext& {
    if (i < nb) return batch.queries[i];
    if (i < 2 * nb) return batch.positives[i - nb];
    return batch.negatives[i - 2 * nb];
  };

  const bool train = opts.grads != nullptr;
  const std::size_t chunks = (total + kChunk - 1) / kChunk;
  std::vector<ModelParams> chunk_grads(train ? chunks : 0);
  std::vector<std::unique_ptr<Tape>> tapes(total);
  std::vector<Tape::Id> roots(total);
  Tensor emb = Tensor::matrix(total, cfg.embed_dim);

  parallel_for(chunks, opts.threads, [&](std::size_t c) {
    if (train) chunk_grads[c] = params.zeros_like();
    for (std::size_t i = c * kChunk; i < std::min(total, (c + 1) * kChunk); ++i) {
      tapes[i] = std::make_unique<Tape>(train);
      std::mt19937_64 rng;
      ForwardOptions fo;
      if (train) fo.grads = &chunk_grads[c];
      if (opts.dropout_seed) {
        rng.seed(derive_seed(*opts.dropout_seed, i));
        fo.dropout_rng = &rng;
      }
      roots[i] = build_embedding(*tapes[i], context(i), params, cfg, fo);
      const Tensor& e = tapes[i]->value(roots[i]);
      std::copy(e.data(), e.data() + e.size(), emb.data() + i * cfg.embed_dim);
      if (!train) tapes[i].reset();
    }
  });

  auto rows = [&](std::size_t begin, std::size_t count) {
    Tensor t = Tensor::matrix(count, cfg.embed_dim);
    std::copy(emb.data() + begin * cfg.embed_dim, emb.data() + (begin + count) * cfg.embed_dim,
              t.data());
    return t;
  };
  const Tensor xq = rows(0, nb), xe = rows(nb, nb), xm = rows(2 * nb, nm);

  // An item the stream has not seen yet is treated as seen once. Positives
  // are rarely in the negative stream early on, and a tiny floor would hand
  // them a logit boost of -log(1e-9) in the mixed-negative loss.
  auto one_count = [](const CountMinSketch& s) {
    return 1.0 / static_cast<double>(std::max<std::uint64_t>(s.total(), 1));
  };
  const double pos_floor = one_count(positive_stream), neg_floor = one_count(negative_stream);
  std::vector<double> qp(nb), qn_pos(nb), qn_neg(nm);
  for (std::size_t i = 0; i < nb; ++i) {
    qp[i] = positive_stream.probability(batch.positives[i].pin, pos_floor);
    qn_pos[i] = negative_stream.probability(batch.positives[i].pin, neg_floor);
  }
  for (std::size_t j = 0; j < nm; ++j) qn_neg[j] = negative_stream.probability(batch.negatives[j].pin, neg_floor);

  const EmbeddingLoss in_batch = sampled_softmax_loss(xq, xe, qp, cfg.logit_scale);
  const EmbeddingLoss mixed = mixed_negative_loss(xq, xe, xm, qn_pos, qn_neg, cfg.logit_scale);
  LossBreakdown out{in_batch.loss, mixed.loss, in_batch.loss + mixed.loss};
  if (!train) return out;

  Tensor demb = Tensor::matrix(total, cfg.embed_dim);
  auto put = [&](const Tensor& g, std::size_t begin) {
    for (std::size_t i = 0; i < g.size(); ++i) demb[begin * cfg.embed_dim + i] += g[i];
  };
  put(in_batch.dxq, 0);
  put(in_batch.dxe, nb);
  put(mixed.dxq, 0);
  put(mixed.dxe, nb);
  put(mixed.dxm, 2 * nb);

  parallel_for(chunks, opts.threads, [&](std::size_t c) {
    for (std::size_t i = c * kChunk; i < std::min(total, (c + 1) * kChunk); ++i) {
      Tensor seed = Tensor::matrix(1, cfg.embed_dim);
      std::copy(demb.data() + i * cfg.embed_dim, demb.data() + (i + 1) * cfg.embed_dim, seed.data());
      tapes[i]->backward(roots[i], seed);
      tapes[i].reset();
    }
  });
  for (const ModelParams& g : chunk_grads) *opts.grads += g;
  return out;
}

}  // namespace multibisage
