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
#include <optional>
#include <span>
#include <vector>

#include "multibisage/model.h"
#include "multibisage/sketch.h"
#include "multibisage/tensor.h"

namespace multibisage {

/// Loss value with gradients w.r.t. each embedding matrix.
struct EmbeddingLoss {
  double loss = 0.0;
  Tensor dxq, dxe, dxm;
};

/// scale * dot - log(prob): the logQ-corrected logit.
double corrected_logit(double dot, double prob, double scale);

/// In-batch sampled softmax with logQ correction. Row i of `xq` is scored
/// against every row of `xe`; row i of `xe` is its positive. `qp[j]` is the
/// sampling probability of candidate j.
EmbeddingLoss sampled_softmax_loss(const Tensor& xq, const Tensor& xe,
                                   std::span<const double> qp, double scale);

/// Softmax over {positive i} plus the random negatives `xm`. `qn_pos` and
/// `qn_neg` are the negative-stream probabilities of the positives and
/// negatives. `xm` may have zero rows.
EmbeddingLoss mixed_negative_loss(const Tensor& xq, const Tensor& xe, const Tensor& xm,
                                  std::span<const double> qn_pos,
                                  std::span<const double> qn_neg, double scale);

struct Batch {
  std::vector<PinContext> queries;
  std::vector<PinContext> positives;  // aligned with queries
  std::vector<PinContext> negatives;

  void validate() const;
};

struct LossBreakdown {
  double in_batch = 0.0;  // sampled softmax over in-batch positives
  double mixed = 0.0;     // mixed negatives
  double total = 0.0;
};

struct LossOptions {
  ModelParams* grads = nullptr;  // accumulates dL/dparams when set
  unsigned threads = 1;
  std::optional<std::uint64_t> dropout_seed;  // dropout active when set
};

/// Encodes every pin in the batch with the shared tower and returns the
/// equal-weight sum of both losses. Positives' sampling probability comes from
/// `positive_stream`; the negative-sampling probabilities of positives and
/// negatives come from `negative_stream`, each floored at one
/// count of its stream. Gradients are reduced in a fixed order, so results do
/// not depend on `threads`.
LossBreakdown combined_loss(const Batch& batch, const ModelParams& params,
                            const ModelConfig& cfg, const CountMinSketch& positive_stream,
                            const CountMinSketch& negative_stream,
                            const LossOptions& opts = {});

/// Embeds contexts in parallel (inference mode), one row per context.
Tensor embed_all(std::span<const PinContext> contexts, const ModelParams& params,
                 const ModelConfig& cfg, unsigned threads);

}  // namespace multibisage
