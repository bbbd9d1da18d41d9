/* Copyright 2026 The PAB Engine Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pab/diffusion.hpp"
#include "pab/engine.hpp"
#include "pab/model.hpp"

namespace {

pab::ModelConfig desk_config(bool cross_in_temporal = false) {
  pab::ModelConfig c;
  c.layers = 2;
  c.hidden = 32;
  c.heads = 4;
  c.frames = 4;
  c.spatial_tokens = 16;
  c.text_tokens = 8;
  c.cross_in_temporal = cross_in_temporal;
  return c;
}

template <typename Real>
pab::Latent<Real> random_latent(const pab::ModelConfig& cfg, std::size_t batch,
                                std::uint64_t seed) {
  pab::RandomStream rng(seed);
  return pab::gaussian_latent<Real>(rng, batch, cfg.frames, cfg.spatial_tokens, cfg.hidden);
}

template <typename Real>
std::vector<pab::Matrix<Real>> texts(const pab::ModelParams<Real>& p, std::size_t batch) {
  std::vector<pab::Matrix<Real>> out;
  const auto cond = pab::default_text(p.cfg);
  const auto null = pab::null_text(p.cfg);
  for (std::size_t b = 0; b < batch; ++b) {
    out.push_back(pab::embed_text(p, b % 2 == 0 ? cond : null));
  }
  return out;
}

// Two steps; the second reuses every kind from the first.
pab::DecisionTable replay_table(std::size_t layers) {
  pab::DecisionTable t(2, layers);
  for (auto k : pab::kAllKinds) t.set_all_layers(1, k, pab::Decision::reuse_from(0));
  return t;
}

TEST(InitModel, DeterministicDigest) {
  const auto cfg = desk_config();
  EXPECT_EQ(pab::init_model<float>(cfg, 7).digest(), pab::init_model<float>(cfg, 7).digest());
  EXPECT_NE(pab::init_model<float>(cfg, 7).digest(), pab::init_model<float>(cfg, 8).digest());
}

TEST(InitModel, ZeroLayersRejected) {
  auto cfg = desk_config();
  cfg.layers = 0;
  EXPECT_THROW(pab::init_model<float>(cfg, 1), pab::ValidationError);
  cfg = desk_config();
  cfg.heads = 5;
  EXPECT_THROW(pab::init_model<float>(cfg, 1), pab::ValidationError);
}

TEST(InitModel, ValuesWithinBound) {
  const auto cfg = desk_config();
  const auto p = pab::init_model<double>(cfg, 3);
  const double bound = 1.0 / std::sqrt(double(cfg.hidden));
  std::size_t count = 0;
  p.for_each_array([&](std::span<const double> v) {
    for (double x : v) {
      ASSERT_GE(x, -bound);
      ASSERT_LT(x, bound);
      ++count;
    }
  });
  EXPECT_GT(count, 0u);
}

TEST(InitModel, FloatIsRoundedDouble) {
  const auto cfg = desk_config();
  const auto pf = pab::init_model<float>(cfg, 3);
  const auto pd = pab::init_model<double>(cfg, 3);
  for (std::size_t i = 0; i < pf.w_in.size(); ++i) {
    EXPECT_EQ(pf.w_in.values()[i], static_cast<float>(pd.w_in.values()[i]));
  }
}

TEST(TimestepEmbedding, ZeroIsSinZeroCosOne) {
  const auto e = pab::timestep_embedding(0.0, 16);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(e[i], 0.0);
    EXPECT_EQ(e[8 + i], 1.0);
  }
}

TEST(TimestepEmbedding, DeterministicAndDistinct) {
  EXPECT_EQ(pab::timestep_embedding(437.5, 32), pab::timestep_embedding(437.5, 32));
  const auto a = pab::timestep_embedding(500.0, 32), b = pab::timestep_embedding(501.0, 32);
  double d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_GT(d2, 0.0);
  EXPECT_THROW(pab::timestep_embedding(1000.5, 8), pab::ValidationError);
  EXPECT_THROW(pab::timestep_embedding(-1.0, 8), pab::ValidationError);
}

TEST(TimestepEmbedding, FrequenciesSpanOneToTenThousandth) {
  const double t = 3.0;
  const auto e = pab::timestep_embedding(t, 10);
  EXPECT_DOUBLE_EQ(e[0], std::sin(t));
  EXPECT_DOUBLE_EQ(e[4], std::sin(t * 1e-4));
}

template <typename Real>
void expect_matches_reference(const pab::ModelConfig& cfg) {
  const auto p = pab::init_model<Real>(cfg, 3);
  const auto x = random_latent<Real>(cfg, 2, 99);
  const auto text = texts(p, 2);
  pab::DecisionTable table(1, cfg.layers);
  pab::CacheStore<Real> cache;
  const double t = 733.0;
  const auto y = pab::forward_step(p, x, t, text, table, 0, cache);
  ASSERT_TRUE(y.same_shape(x));
  for (std::size_t b = 0; b < 2; ++b) {
    const auto ids = b == 0 ? pab::default_text(cfg) : pab::null_text(cfg);
    const auto want = oracle::forward_one(p, oracle::flat(x.batch[b]), t, ids);
    EXPECT_EQ(pab::digest<Real>(y.batch[b].storage()), pab::digest<Real>(want))
        << "batch element " << b;
    EXPECT_EQ(y.batch[b].storage(), want);
  }
}

TEST(ForwardStep, DeskMatchesStraightLineReferenceF32) {
  expect_matches_reference<float>(desk_config());
}

TEST(ForwardStep, DeskMatchesStraightLineReferenceF64) {
  expect_matches_reference<double>(desk_config());
}

TEST(ForwardStep, CrossInTemporalMatchesReference) {
  expect_matches_reference<float>(desk_config(true));
}

TEST(ForwardStep, CachedOutputIsPreResidual) {
  const auto cfg = desk_config();
  const auto p = pab::init_model<double>(cfg, 3);
  const auto x = random_latent<double>(cfg, 1, 5);
  const auto text = texts(p, 1);
  const auto table = replay_table(cfg.layers);
  pab::CacheStore<double> cache;
  const double t = 600.0;
  pab::forward_step(p, x, t, text, table, 0, cache);
  const auto& e = cache.fetch(pab::CacheKey::site(0, pab::Site::kSpatialAttn), 0);
  ASSERT_EQ(e.outputs.size(), 1u);
  const std::size_t rows = cfg.frames * cfg.spatial_tokens, d = cfg.hidden, S = cfg.spatial_tokens;
  const auto h = oracle::mm(oracle::flat(x.batch[0]), oracle::flat(p.w_in), rows, d, d);
  const auto want = oracle::self_attn(p.layers[0].spatial_attn, h, rows, d, cfg.heads,
                                      oracle::cond_row(p, t), cfg.frames, S,
                                      [S](std::size_t g, std::size_t i) { return g * S + i; });
  EXPECT_EQ(e.outputs[0].storage(), want);
}

template <typename Real>
void expect_replay_identity(pab::BroadcastObject mode) {
  const auto cfg = desk_config(true);
  const auto p = pab::init_model<Real>(cfg, 3);
  const auto x = random_latent<Real>(cfg, 2, 5);
  const auto text = texts(p, 2);
  const auto table = replay_table(cfg.layers);
  pab::CacheStore<Real> cache;
  pab::ForwardOptions opt;
  opt.mode = mode;
  const auto y0 = pab::forward_step(p, x, 400.0, text, table, 0, cache, nullptr, opt);
  const auto y1 = pab::forward_step(p, x, 400.0, text, table, 1, cache, nullptr, opt);
  EXPECT_EQ(y0, y1);
}

TEST(ForwardStep, ReplayOfIdenticalInputIsBitExactOutputs) {
  expect_replay_identity<float>(pab::BroadcastObject::kOutputs);
}

TEST(ForwardStep, ReplayOfIdenticalInputIsBitExactScores) {
  expect_replay_identity<float>(pab::BroadcastObject::kScores);
  expect_replay_identity<double>(pab::BroadcastObject::kScores);
}

TEST(ForwardStep, SingleFrameTemporalReuseIsExact) {
  auto cfg = desk_config();
  cfg.frames = 1;
  const auto p = pab::init_model<float>(cfg, 4);
  const auto x = random_latent<float>(cfg, 1, 6);
  const auto text = texts(p, 1);
  pab::DecisionTable table(2, cfg.layers);
  table.set_all_layers(1, pab::ComponentKind::kTemporalAttn, pab::Decision::reuse_from(0));
  pab::CacheStore<float> cache;
  const auto y0 = pab::forward_step(p, x, 300.0, text, table, 0, cache);
  const auto y1 = pab::forward_step(p, x, 300.0, text, table, 1, cache);
  EXPECT_EQ(y0, y1);
}

TEST(ForwardStep, ReuseWithoutCacheIsPolicyError) {
  const auto cfg = desk_config();
  const auto p = pab::init_model<float>(cfg, 3);
  const auto x = random_latent<float>(cfg, 1, 5);
  const auto text = texts(p, 1);
  const auto table = replay_table(cfg.layers);
  pab::CacheStore<float> cache;
  EXPECT_THROW(pab::forward_step(p, x, 500.0, text, table, 1, cache), pab::PolicyError);
}

TEST(ForwardStep, ScoresReplayFromOutputsCacheIsPolicyError) {
  const auto cfg = desk_config();
  const auto p = pab::init_model<float>(cfg, 3);
  const auto x = random_latent<float>(cfg, 1, 5);
  const auto text = texts(p, 1);
  const auto table = replay_table(cfg.layers);
  pab::CacheStore<float> cache;
  pab::forward_step(p, x, 500.0, text, table, 0, cache);
  pab::ForwardOptions opt;
  opt.mode = pab::BroadcastObject::kScores;
  EXPECT_THROW(pab::forward_step(p, x, 500.0, text, table, 1, cache, nullptr, opt),
               pab::PolicyError);
}

TEST(ForwardStep, ShapeMismatchThrows) {
  const auto cfg = desk_config();
  const auto p = pab::init_model<float>(cfg, 3);
  pab::Latent<float> x(1, cfg.frames + 1, cfg.spatial_tokens, cfg.hidden);
  pab::DecisionTable table(1, cfg.layers);
  pab::CacheStore<float> cache;
  EXPECT_THROW(pab::forward_step(p, x, 500.0, texts(p, 1), table, 0, cache), pab::ShapeError);
}

TEST(ForwardStep, ShapePreservedOnRandomConfigs) {
  oracle::Gen g(2024);
  for (int trial = 0; trial < 12; ++trial) {
    pab::ModelConfig cfg;
    cfg.layers = g.integer(1, 3);
    cfg.heads = g.integer(1, 3);
    cfg.hidden = cfg.heads * g.integer(1, 4) * 2;
    cfg.frames = g.integer(1, 4);
    cfg.spatial_tokens = g.integer(1, 6);
    cfg.text_tokens = g.integer(1, 4);
    cfg.mlp_ratio = g.coin() ? 4.0 : 2.0;
    cfg.cross_in_temporal = g.coin();
    cfg.vocab = 16;
    const auto p = pab::init_model<float>(cfg, trial);
    const auto x = random_latent<float>(cfg, 1, trial);
    pab::DecisionTable table(1, cfg.layers);
    pab::CacheStore<float> cache;
    pab::ComponentTrace trace;
    const auto y = pab::forward_step(p, x, 250.0, texts(p, 1), table, 0, cache, &trace);
    EXPECT_TRUE(y.same_shape(x));
    EXPECT_TRUE(pab::all_finite<float>(y.flatten()));
    EXPECT_EQ(trace.records.size(), cfg.layers * cfg.sites_per_layer());
  }
}

TEST(ForwardStep, TraceCoversEverySiteOnce) {
  for (bool cit : {false, true}) {
    const auto cfg = desk_config(cit);
    const auto p = pab::init_model<float>(cfg, 3);
    const auto x = random_latent<float>(cfg, 1, 5);
    const auto table = replay_table(cfg.layers);
    pab::CacheStore<float> cache;
    pab::ComponentTrace trace;
    pab::forward_step(p, x, 500.0, texts(p, 1), table, 0, cache, &trace);
    pab::forward_step(p, x, 480.0, texts(p, 1), table, 1, cache, &trace);
    ASSERT_EQ(trace.records.size(), 2 * cfg.layers * cfg.sites_per_layer());
    std::size_t i = 0;
    for (std::size_t s = 0; s < 2; ++s) {
      for (std::size_t l = 0; l < cfg.layers; ++l) {
        for (auto site : cfg.sites()) {
          const auto& r = trace.records[i++];
          EXPECT_EQ(r.step, s);
          EXPECT_EQ(r.layer, l);
          EXPECT_EQ(r.site, site);
          EXPECT_EQ(r.kind, pab::kind_of(site));
          EXPECT_EQ(r.decision.reuse, s == 1);
          if (s == 1) EXPECT_EQ(r.decision.source, 0);
        }
      }
    }
    EXPECT_EQ(trace.steps.size(), 2u);
  }
}

TEST(ForwardStep, ReuseFlopsOutputsZeroScoresPositive) {
  const auto cfg = desk_config();
  const auto p = pab::init_model<float>(cfg, 3);
  const auto x = random_latent<float>(cfg, 1, 5);
  const auto table = replay_table(cfg.layers);
  for (auto mode : {pab::BroadcastObject::kOutputs, pab::BroadcastObject::kScores}) {
    pab::CacheStore<float> cache;
    pab::ComponentTrace trace;
    pab::ForwardOptions opt;
    opt.mode = mode;
    pab::forward_step(p, x, 500.0, texts(p, 1), table, 0, cache, &trace, opt);
    pab::forward_step(p, x, 500.0, texts(p, 1), table, 1, cache, &trace, opt);
    for (const auto& r : trace.records) {
      if (!r.decision.reuse) {
        EXPECT_GT(r.flops.total(), 0u);
        continue;
      }
      const bool attn = r.kind != pab::ComponentKind::kMlp;
      if (mode == pab::BroadcastObject::kOutputs || !attn) {
        EXPECT_EQ(r.flops.total(), 0u);
      } else {
        EXPECT_GT(r.flops.total(), 0u);
      }
    }
  }
}

TEST(ForwardStep, DeterministicAcrossCalls) {
  const auto cfg = desk_config();
  const auto p = pab::init_model<float>(cfg, 3);
  const auto x = random_latent<float>(cfg, 2, 5);
  pab::DecisionTable table(1, cfg.layers);
  pab::CacheStore<float> c1, c2;
  EXPECT_EQ(pab::forward_step(p, x, 10.0, texts(p, 2), table, 0, c1),
            pab::forward_step(p, x, 10.0, texts(p, 2), table, 0, c2));
}

}  // namespace
