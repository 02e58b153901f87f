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

#include "multibisage/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "multibisage/common.h"

namespace multibisage {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("shape mismatch: ") + what);
}

Tensor copy_cols(const Tensor& src, std::size_t c0, std::size_t width) {
  Tensor out = Tensor::matrix(src.rows(), width);
  for (std::size_t r = 0; r < src.rows(); ++r) {
    const double* s = src.data() + r * src.cols() + c0;
    std::copy(s, s + width, out.data() + r * width);
  }
  return out;
}

void paste_cols(const Tensor& src, std::size_t c0, Tensor& dst) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    const double* s = src.data() + r * src.cols();
    std::copy(s, s + src.cols(), dst.data() + r * dst.cols() + c0);
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  matmul_acc(a, b, out);
  return out;
}

void matmul_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k && out.rows() == m && out.cols() == n, "matmul");
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = pa[i * k + l];
      if (av == 0.0) continue;
      const double* brow = pb + l * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == m && out.rows() == k && out.cols() == n, "matmul_tn");
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = pb + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = pa[i * k + l];
      if (av == 0.0) continue;
      double* orow = po + l * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), n = a.cols(), k = b.rows();
  require(b.cols() == n && out.rows() == m && out.cols() == k, "matmul_nt");
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * n;
    for (std::size_t j = 0; j < k; ++j) {
      const double* brow = pb + j * n;
      double s = 0.0;
      for (std::size_t l = 0; l < n; ++l) s += arow[l] * brow[l];
      po[i * k + j] += s;
    }
  }
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.cols() == w.rows() && b.size() == w.cols(), "linear");
  Tensor y = Tensor::matrix(x.rows(), w.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    std::copy(b.data(), b.data() + b.size(), y.data() + r * y.cols());
  }
  matmul_acc(x, w, y);
  return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx,
                     Tensor& dw, Tensor& db) {
  matmul_tn_acc(x, dy, dw);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const double* g = dy.data() + r * dy.cols();
    for (std::size_t c = 0; c < dy.cols(); ++c) db[c] += g[c];
  }
  if (dx != nullptr) {
    *dx = Tensor::matrix(x.rows(), x.cols());
    matmul_nt_acc(dy, w, *dx);
  }
}

Tensor ffn_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = linear_forward(x, w, b);
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

void ffn_backward(const Tensor& x, const Tensor& w, const Tensor& y, const Tensor& dy,
                  Tensor* dx, Tensor& dw, Tensor& db) {
  require(y.size() == dy.size(), "ffn backward");
  Tensor g = dy;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (y[i] <= 0.0) g[i] = 0.0;
  }
  linear_backward(x, w, g, dx, dw, db);
}

void softmax_rows(Tensor& logits, std::span<const std::uint8_t> key_mask) {
  const std::size_t n = logits.cols();
  require(key_mask.empty() || key_mask.size() == n, "softmax mask");
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double* row = logits.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      if (key_mask.empty() || key_mask[c]) mx = std::max(mx, row[c]);
    }
    if (!std::isfinite(mx)) throw NumericError("softmax: no finite unmasked logit");
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (key_mask.empty() || key_mask[c]) {
        row[c] = std::exp(row[c] - mx);
        sum += row[c];
      } else {
        row[c] = 0.0;
      }
    }
    const double inv = 1.0 / sum;
    for (std::size_t c = 0; c < n; ++c) row[c] *= inv;
  }
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::span<const std::uint8_t> key_mask, Tensor* weights) {
  require(q.cols() == k.cols(), "attention q/k width");
  require(k.rows() == v.rows(), "attention k/v rows");
  Tensor w = Tensor::matrix(q.rows(), k.rows());
  matmul_nt_acc(q, k, w);
  w *= 1.0 / std::sqrt(static_cast<double>(q.cols()));
  softmax_rows(w, key_mask);
  Tensor out = matmul(w, v);
  if (weights != nullptr) *weights = std::move(w);
  return out;
}

void attention_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                        const Tensor& weights, const Tensor& dout, Tensor& dq, Tensor& dk,
                        Tensor& dv) {
  const std::size_t mq = q.rows(), m = k.rows();
  Tensor dw = Tensor::matrix(mq, m);
  matmul_nt_acc(dout, v, dw);
  dv = Tensor::matrix(m, v.cols());
  matmul_tn_acc(weights, dout, dv);
  // Softmax Jacobian: dlogit = w * (dw - <w, dw>) per row.
  for (std::size_t r = 0; r < mq; ++r) {
    const double* wr = weights.data() + r * m;
    double* g = dw.data() + r * m;
    double dot = 0.0;
    for (std::size_t c = 0; c < m; ++c) dot += wr[c] * g[c];
    for (std::size_t c = 0; c < m; ++c) g[c] = wr[c] * (g[c] - dot);
  }
  dw *= 1.0 / std::sqrt(static_cast<double>(q.cols()));
  dq = Tensor::matrix(mq, q.cols());
  matmul_acc(dw, k, dq);
  dk = Tensor::matrix(m, k.cols());
  matmul_tn_acc(dw, q, dk);
}

void AttentionParams::validate() const {
  if (heads == 0) throw ConfigError("attention: head count must be >= 1");
  const std::size_t d = wq.rows();
  if (d % heads != 0) {
    throw ConfigError("attention: width " + std::to_string(d) +
                      " is not divisible by head count " + std::to_string(heads));
  }
  for (const Tensor* t : {&wq, &wk, &wv}) {
    if (t->rows() != d || t->cols() != d) throw ConfigError("attention: projection shape");
  }
  if (wo.rows() != d) throw ConfigError("attention: output projection shape");
}

Tensor multihead(const Tensor& xq, const Tensor& xkv, const AttentionParams& p,
                 std::span<const std::uint8_t> key_mask, MultiheadCache* cache) {
  require(xq.cols() == p.d_in() && xkv.cols() == p.d_in(), "multihead input width");
  const std::size_t dh = p.head_dim();
  Tensor q = matmul(xq, p.wq);
  Tensor k = matmul(xkv, p.wk);
  Tensor v = matmul(xkv, p.wv);
  Tensor concat = Tensor::matrix(xq.rows(), p.d_in());
  if (cache != nullptr) cache->weights.resize(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    Tensor w;
    Tensor head = attention(copy_cols(q, h * dh, dh), copy_cols(k, h * dh, dh),
                            copy_cols(v, h * dh, dh), key_mask, &w);
    paste_cols(head, h * dh, concat);
    if (cache != nullptr) cache->weights[h] = std::move(w);
  }
  Tensor out = matmul(concat, p.wo);
  if (cache != nullptr) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->concat = std::move(concat);
  }
  return out;
}

void multihead_backward(const MultiheadCache& c, const AttentionParams& p,
                        const Tensor& dout, Tensor& dxq, Tensor& dxkv,
                        AttentionParams& grads) {
  const std::size_t dh = p.head_dim();
  matmul_tn_acc(c.concat, dout, grads.wo);
  Tensor dconcat = Tensor::matrix(c.concat.rows(), c.concat.cols());
  matmul_nt_acc(dout, p.wo, dconcat);

  Tensor dq = Tensor::matrix(c.q.rows(), c.q.cols());
  Tensor dk = Tensor::matrix(c.k.rows(), c.k.cols());
  Tensor dv = Tensor::matrix(c.v.rows(), c.v.cols());
  for (std::size_t h = 0; h < p.heads; ++h) {
    Tensor dqh, dkh, dvh;
    attention_backward(copy_cols(c.q, h * dh, dh), copy_cols(c.k, h * dh, dh),
                       copy_cols(c.v, h * dh, dh), c.weights[h],
                       copy_cols(dconcat, h * dh, dh), dqh, dkh, dvh);
    paste_cols(dqh, h * dh, dq);
    paste_cols(dkh, h * dh, dk);
    paste_cols(dvh, h * dh, dv);
  }
  matmul_tn_acc(c.xq, dq, grads.wq);
  matmul_tn_acc(c.xkv, dk, grads.wk);
  matmul_tn_acc(c.xkv, dv, grads.wv);
  dxq = Tensor::matrix(c.xq.rows(), c.xq.cols());
  matmul_nt_acc(dq, p.wq, dxq);
  dxkv = Tensor::matrix(c.xkv.rows(), c.xkv.cols());
  matmul_nt_acc(dk, p.wk, dxkv);
  matmul_nt_acc(dv, p.wv, dxkv);
}

Tensor l2_normalize(const Tensor& x) {
  double ss = 0.0;
  for (double v : x.values()) ss += v * v;
  const double norm = std::sqrt(ss);
  if (!(norm > kNormEpsilon)) throw NumericError("degenerate embedding");
  Tensor y = x;
  y *= 1.0 / norm;
  return y;
}

Tensor l2_normalize_backward(const Tensor& x, const Tensor& y, const Tensor& dy) {
  double ss = 0.0;
  for (double v : x.values()) ss += v * v;
  const double inv_norm = 1.0 / std::sqrt(ss);
  double dot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * dy[i];
  Tensor dx = x.zeros_like();
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = (dy[i] - y[i] * dot) * inv_norm;
  return dx;
}

namespace {
constexpr double kLayerNormEps = 1e-5;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  LayerNormCache* cache) {
  const std::size_t n = x.cols();
  require(gain.size() == n && bias.size() == n, "layer_norm params");
  Tensor xhat = x.zeros_like();
  std::vector<double> inv_std(x.rows());
  Tensor y = x.zeros_like();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (in[c] - mean) * inv_std[r];
      y(r, c) = xhat(r, c) * gain[c] + bias[c];
    }
  }
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

void layer_norm_backward(const LayerNormCache& cache, const Tensor& gain,
                         const Tensor& dy, Tensor& dx, Tensor& dgain, Tensor& dbias) {
  const std::size_t n = dy.cols();
  dx = dy.zeros_like();
  std::vector<double> g(n);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double mean_g = 0.0, mean_gx = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      dgain[c] += dy(r, c) * cache.xhat(r, c);
      dbias[c] += dy(r, c);
      g[c] = dy(r, c) * gain[c];
      mean_g += g[c];
      mean_gx += g[c] * cache.xhat(r, c);
    }
    mean_g /= static_cast<double>(n);
    mean_gx /= static_cast<double>(n);
    for (std::size_t c = 0; c < n; ++c) {
      dx(r, c) = cache.inv_std[r] * (g[c] - mean_g - cache.xhat(r, c) * mean_gx);
    }
  }
}

double grad_check(const Objective& f, std::span<const double> w, double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw ConfigError("grad_check: h must lie in [1e-7, 1e-3]");
  std::vector<double> analytic;
  const double f0 = f(w, &analytic);
  if (!std::isfinite(f0)) throw NumericError("grad_check: non-finite objective");
  if (analytic.size() != w.size()) throw ConfigError("grad_check: gradient size mismatch");
  // Coordinates far below the largest entry sit under the resolution of
  // central differences; they are compared against that scale instead.
  double largest = 0.0;
  for (double a : analytic) largest = std::max(largest, std::abs(a));
  const double floor = std::max(1e-8, 1e-6 * largest);
  std::vector<double> probe(w.begin(), w.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    probe[i] = w[i] + h;
    const double fp = f(probe, nullptr);
    probe[i] = w[i] - h;
    const double fm = f(probe, nullptr);
    probe[i] = w[i];
    const double numeric = (fp - fm) / (2.0 * h);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
      throw NumericError("grad_check: non-finite value at coordinate " + std::to_string(i));
    }
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace multibisage
