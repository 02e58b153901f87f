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
#include <span>
#include <vector>

#include "multibisage/tensor.h"

// Dense building blocks with explicit reverse-mode counterparts.
//
// Convention for every *_backward: gradients of inputs are written
// (overwriting), gradients of parameters are accumulated with +=, so a
// caller can sum contributions from many examples into one buffer.

namespace multibisage {

// out = a * b, (m x k)(k x n).
Tensor matmul(const Tensor& a, const Tensor& b);
// out += a * b
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& out);
// out += a^T * b, (m x k)^T (m x n) -> k x n
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out);
// out += a * b^T, (m x n)(k x n)^T -> m x k
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& out);

/// xW + b, no activation.
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx,
                     Tensor& dw, Tensor& db);

/// ReLU(xW + b).
Tensor ffn_forward(const Tensor& x, const Tensor& w, const Tensor& b);
/// `y` is the forward output; units with y == 0 pass no gradient.
void ffn_backward(const Tensor& x, const Tensor& w, const Tensor& y, const Tensor& dy,
                  Tensor* dx, Tensor& dw, Tensor& db);

/// Row-wise softmax in place with max subtraction. Columns whose mask entry
/// is 0 get weight exactly 0; an empty mask keeps every column.
void softmax_rows(Tensor& logits, std::span<const std::uint8_t> key_mask = {});

/// softmax(Q K^T / sqrt(d_k)) V. Q is mq x d_k, K is m x d_k, V is m x d_vv.
/// Keys with mask 0 are excluded. `weights`, when given, receives the
/// mq x m attention matrix for the backward pass.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::span<const std::uint8_t> key_mask = {}, Tensor* weights = nullptr);
void attention_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                        const Tensor& weights, const Tensor& dout, Tensor& dq, Tensor& dk,
                        Tensor& dv);

/// Multi-head attention parameters. wq/wk/wv are d_in x d_in; column block
/// j (width d_in / heads) holds head j's projection. wo is d_in x d_out.
struct AttentionParams {
  std::size_t heads = 1;
  Tensor wq, wk, wv, wo;

  std::size_t d_in() const { return wq.rows(); }
  std::size_t d_out() const { return wo.cols(); }
  std::size_t head_dim() const { return d_in() / heads; }
  void validate() const;
  AttentionParams zeros_like() const {
    return {heads, wq.zeros_like(), wk.zeros_like(), wv.zeros_like(), wo.zeros_like()};
  }
};

struct MultiheadCache {
  Tensor xq, xkv;
  Tensor q, k, v;                // projected, full width
  std::vector<Tensor> weights;   // per head, mq x m
  Tensor concat;                 // mq x d_in
};

/// Concat(head_1..head_H) W^O with head_j = attention(xq Wq_j, xkv Wk_j,
/// xkv Wv_j). Queries come from `xq`, keys and values from `xkv`; for self
/// attention pass the same matrix twice.
Tensor multihead(const Tensor& xq, const Tensor& xkv, const AttentionParams& p,
                 std::span<const std::uint8_t> key_mask = {},
                 MultiheadCache* cache = nullptr);
inline Tensor multihead(const Tensor& x, const AttentionParams& p) {
  return multihead(x, x, p);
}
void multihead_backward(const MultiheadCache& cache, const AttentionParams& p,
                        const Tensor& dout, Tensor& dxq, Tensor& dxkv,
                        AttentionParams& grads);

inline constexpr double kNormEpsilon = 1e-12;

/// x / ||x||; throws NumericError("degenerate embedding") if ||x|| <= 1e-12.
Tensor l2_normalize(const Tensor& x);
Tensor l2_normalize_backward(const Tensor& x, const Tensor& y, const Tensor& dy);

struct LayerNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
};
/// Per-row layer normalization with learnable gain and bias (length cols).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  LayerNormCache* cache = nullptr);
void layer_norm_backward(const LayerNormCache& cache, const Tensor& gain,
                         const Tensor& dy, Tensor& dx, Tensor& dgain, Tensor& dbias);

/// Objective for gradient checking: returns f(w); fills `grad` when non-null.
using Objective = std::function<double(std::span<const double> w, std::vector<double>* grad)>;

/// Compares the analytic gradient at w with central differences of step h
/// and returns the worst per-coordinate relative error
/// |a - n| / max(|a|, |n|, s), where s = max(1e-8, 1e-6 * max_j |a_j|).
/// h must lie in [1e-7, 1e-3].
double grad_check(const Objective& f, std::span<const double> w, double h = 1e-5);

}  // namespace multibisage
