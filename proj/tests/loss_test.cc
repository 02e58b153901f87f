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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "multibisage/loss.h"
#include "test_support.h"

namespace multibisage {
namespace {

using testing::random_context;
using testing::random_tensor;
using testing::toy_config;

Tensor unit_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  auto t = random_tensor({n, d}, rng);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : t.row(i)) s += v * v;
    for (double& v : t.row(i)) v /= std::sqrt(s);
  }
  return t;
}

// Full-softmax cross-entropy written independently of the library.
double full_softmax_ce(const Tensor& xq, const Tensor& catalog, double scale) {
  double total = 0.0;
  for (std::size_t i = 0; i < xq.rows(); ++i) {
    std::vector<double> z(catalog.rows());
    for (std::size_t j = 0; j < catalog.rows(); ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < xq.cols(); ++c) d += xq(i, c) * catalog(j, c);
      z[j] = scale * d;
    }
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    total += m + std::log(s) - z[i];
  }
  return total / static_cast<double>(xq.rows());
}

TEST(SampledSoftmax, SingletonBatchIsZero) {
  std::mt19937_64 rng(1);
  auto q = unit_rows(1, 4, rng), e = unit_rows(1, 4, rng);
  std::vector<double> qp{0.3};
  EXPECT_EQ(sampled_softmax_loss(q, e, qp, 10.0).loss, 0.0);
}

TEST(SampledSoftmax, EqualLogitsGiveLogB) {
  const std::size_t b = 6;
  auto q = Tensor::matrix(b, 3, 0.0), e = Tensor::matrix(b, 3, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    q(i, 0) = 1.0;
    e(i, 0) = 1.0;
  }
  std::vector<double> qp(b, 0.2);
  EXPECT_NEAR(sampled_softmax_loss(q, e, qp, 3.0).loss, std::log(double(b)), 1e-12);
}

TEST(SampledSoftmax, FullCatalogMatchesFullSoftmax) {
  std::mt19937_64 rng(2);
  const std::size_t n = 50;
  auto q = unit_rows(n, 8, rng), catalog = unit_rows(n, 8, rng);
  std::vector<double> qp(n, 1.0 / n);
  EXPECT_NEAR(sampled_softmax_loss(q, catalog, qp, 5.0).loss, full_softmax_ce(q, catalog, 5.0), 1e-6);
}

TEST(SampledSoftmax, RejectsBadProbabilities) {
  std::mt19937_64 rng(3);
  auto q = unit_rows(2, 4, rng), e = unit_rows(2, 4, rng);
  std::vector<double> qp{0.5, 0.0};
  EXPECT_THROW(sampled_softmax_loss(q, e, qp, 1.0), ConfigError);
  qp = {0.5, 1.5};
  EXPECT_THROW(sampled_softmax_loss(q, e, qp, 1.0), ConfigError);
}

// Row i's loss: logsumexp of its corrected logits minus the positive's.
double pair_loss(const Tensor& q, const Tensor& e, const std::vector<double>& qp, double scale, std::size_t i) {
  std::vector<double> logits(e.rows());
  for (std::size_t j = 0; j < e.rows(); ++j) {
    double dot = 0.0;
    for (std::size_t c = 0; c < q.cols(); ++c) dot += q(i, c) * e(j, c);
    logits[j] = corrected_logit(dot, qp[j], scale);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return mx + std::log(z) - logits[i];
}

TEST(SampledSoftmax, PairLossMonotoneInPositiveProbability) {
  std::mt19937_64 rng(4);
  auto q = unit_rows(4, 5, rng), e = unit_rows(4, 5, rng);
  std::vector<double> qp{0.1, 0.2, 0.3, 0.4};
  double prev = pair_loss(q, e, qp, 2.0, 0);
  for (double p : {0.15, 0.3, 0.6, 0.9}) {
    qp[0] = p;
    double mean = 0.0;
    for (std::size_t i = 0; i < 4; ++i) mean += pair_loss(q, e, qp, 2.0, i) / 4.0;
    EXPECT_NEAR(sampled_softmax_loss(q, e, qp, 2.0).loss, mean, 1e-12);
    const double cur = pair_loss(q, e, qp, 2.0, 0);
    EXPECT_GT(cur, prev);
    prev = cur;
  }
}

TEST(SampledSoftmax, ShiftInvariancePerQueryRow) {
  // Scaling every probability by the same factor shifts all logits of every
  // row by a constant.
  std::mt19937_64 rng(5);
  auto q = unit_rows(5, 4, rng), e = unit_rows(5, 4, rng);
  std::vector<double> qp{0.1, 0.2, 0.05, 0.3, 0.15}, scaled(qp);
  for (double& p : scaled) p *= 0.37;
  EXPECT_NEAR(sampled_softmax_loss(q, e, qp, 4.0).loss, sampled_softmax_loss(q, e, scaled, 4.0).loss,
              1e-12);
}

TEST(CorrectedLogit, PopularItemGetsSmallerLogit) {
  EXPECT_LT(corrected_logit(0.5, 0.2, 1.0), corrected_logit(0.5, 0.01, 1.0));
  EXPECT_DOUBLE_EQ(corrected_logit(0.5, 1.0, 4.0), 2.0);
}

TEST(MixedNegative, HandExample) {
  // Dot 1 to the positive, 0 to both negatives, uniform q, scale 1.
  auto q = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}});
  auto e = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}});
  auto m = Tensor::from_rows({{0, 0, 1}, {0, 0, -1}});
  std::vector<double> qn_pos{0.25, 0.25}, qn_neg{0.25, 0.25};
  const double e1 = std::exp(1.0);
  EXPECT_NEAR(mixed_negative_loss(q, e, m, qn_pos, qn_neg, 1.0).loss, -std::log(e1 / (e1 + 2.0)),
              1e-14);
}

TEST(MixedNegative, EmptyNegativesGiveZero) {
  std::mt19937_64 rng(6);
  auto q = unit_rows(3, 4, rng), e = unit_rows(3, 4, rng);
  std::vector<double> qn_pos{0.1, 0.2, 0.3};
  EXPECT_EQ(mixed_negative_loss(q, e, Tensor::matrix(0, 4), qn_pos, {}, 2.0).loss, 0.0);
}

TEST(MixedNegative, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  const std::size_t b = 3, d = 4;
  auto q = unit_rows(b, d, rng), e = unit_rows(b, d, rng), m = unit_rows(b, d, rng);
  std::vector<double> qn_pos{0.1, 0.3, 0.05}, qn_neg{0.2, 0.02, 0.4};
  std::vector<double> w;
  for (const Tensor* t : {&q, &e, &m}) w.insert(w.end(), t->values().begin(), t->values().end());
  auto f = [&](std::span<const double> v, std::vector<double>* g) {
    auto take = [&](std::size_t off) {
      return Tensor::from_values({b, d}, {v.begin() + off, v.begin() + off + b * d});
    };
    auto r = mixed_negative_loss(take(0), take(b * d), take(2 * b * d), qn_pos, qn_neg, 3.0);
    if (g) {
      g->clear();
      for (const Tensor* t : {&r.dxq, &r.dxe, &r.dxm}) g->insert(g->end(), t->values().begin(), t->values().end());
    }
    return r.loss;
  };
  EXPECT_LE(grad_check(f, w), 1e-6);
}

TEST(SampledSoftmax, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  const std::size_t b = 4, d = 3;
  auto q = unit_rows(b, d, rng), e = unit_rows(b, d, rng);
  std::vector<double> qp{0.1, 0.3, 0.05, 0.2};
  std::vector<double> w;
  for (const Tensor* t : {&q, &e}) w.insert(w.end(), t->values().begin(), t->values().end());
  auto f = [&](std::span<const double> v, std::vector<double>* g) {
    auto r = sampled_softmax_loss(Tensor::from_values({b, d}, {v.begin(), v.begin() + b * d}),
                                  Tensor::from_values({b, d}, {v.begin() + b * d, v.end()}), qp, 2.0);
    if (g) {
      g->assign(r.dxq.values().begin(), r.dxq.values().end());
      g->insert(g->end(), r.dxe.values().begin(), r.dxe.values().end());
    }
    return r.loss;
  };
  EXPECT_LE(grad_check(f, w), 1e-6);
}

struct ToyBatch {
  Batch batch;
  CountMinSketch positives, negatives;
};

ToyBatch toy_batch(const ModelConfig& cfg, std::size_t b, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ToyBatch t;
  NodeId id = 1;
  for (std::size_t i = 0; i < b; ++i) {
    t.batch.queries.push_back(random_context(cfg, rng, id++, {1, 2}));
    t.batch.positives.push_back(random_context(cfg, rng, id++, {2, 0}));
    t.positives.increment(t.batch.positives.back().pin);
  }
  for (std::size_t i = 0; i < m; ++i) {
    t.batch.negatives.push_back(random_context(cfg, rng, id++));
    t.negatives.increment(t.batch.negatives.back().pin);
  }
  return t;
}

TEST(CombinedLoss, DegenerateBatchIsZero) {
  auto cfg = toy_config(Variant::kMultiBiSage);
  auto t = toy_batch(cfg, 1, 0, 1);
  auto params = init_params(cfg, 1);
  auto r = combined_loss(t.batch, params, cfg, t.positives, t.negatives);
  EXPECT_EQ(r.in_batch, 0.0);
  EXPECT_EQ(r.mixed, 0.0);
  EXPECT_EQ(r.total, 0.0);
}

TEST(CombinedLoss, TotalIsSumOfParts) {
  auto cfg = toy_config(Variant::kMultiBiSage);
  cfg.logit_scale = 5.0;
  auto t = toy_batch(cfg, 5, 5, 2);
  auto params = init_params(cfg, 2);
  auto r = combined_loss(t.batch, params, cfg, t.positives, t.negatives);
  EXPECT_GT(r.in_batch, 0.0);
  EXPECT_GT(r.mixed, 0.0);
  EXPECT_NEAR(r.total, r.in_batch + r.mixed, 1e-12);
}

TEST(CombinedLoss, ThreadCountDoesNotChangeResults) {
  auto cfg = toy_config(Variant::kMultiBiSage);
  auto t = toy_batch(cfg, 13, 13, 3);
  auto params = init_params(cfg, 3);
  auto g1 = params.zeros_like(), g4 = params.zeros_like();
  LossOptions o1{&g1, 1, std::nullopt}, o4{&g4, 4, std::nullopt};
  auto r1 = combined_loss(t.batch, params, cfg, t.positives, t.negatives, o1);
  auto r4 = combined_loss(t.batch, params, cfg, t.positives, t.negatives, o4);
  EXPECT_EQ(r1.total, r4.total);
  EXPECT_EQ(g1, g4);
}

class CombinedGradient : public ::testing::TestWithParam<std::tuple<Variant, EncoderMode>> {};

TEST_P(CombinedGradient, MatchesFiniteDifferences) {
  auto [v, mode] = GetParam();
  auto cfg = toy_config(v, mode);
  cfg.logit_scale = 3.0;
  auto t = toy_batch(cfg, 3, 3, 4);
  auto params = init_params(cfg, 4);
  auto f = [&](std::span<const double> w, std::vector<double>* g) {
    ModelParams p = params;
    p.unflatten(w);
    ModelParams grads = p.zeros_like();
    LossOptions opts;
    if (g) opts.grads = &grads;
    const double loss = combined_loss(t.batch, p, cfg, t.positives, t.negatives, opts).total;
    if (g) *g = grads.flatten();
    return loss;
  };
  EXPECT_LE(grad_check(f, params.flatten()), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(
    AllVariants, CombinedGradient,
    ::testing::Combine(::testing::ValuesIn(all_variants()),
                       ::testing::Values(EncoderMode::kAttentionOnly, EncoderMode::kFullBlock)),
    [](const auto& info) {
      return std::string(variant_name(std::get<0>(info.param))) + "_" +
             std::string(encoder_mode_name(std::get<1>(info.param)));
    });

}  // namespace
}  // namespace multibisage
