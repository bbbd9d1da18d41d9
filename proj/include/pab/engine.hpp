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

// One denoiser evaluation under a decision table.
//
// The residual stream lives in the frame-sharded (spatial) layout. Spatial
// attention, cross attention and the MLPs run shard-locally; temporal
// attention re-shards to the token-sharded layout, computes, and re-shards
// its output back. A single worker is the serial case, where both re-shards
// are identities.
//
// Cached values are module outputs after the output projection and before
// the residual add, so a Reuse adds the cached output to the current stream
// without touching any of the module's interior.

#ifndef PAB_ENGINE_HPP_
#define PAB_ENGINE_HPP_

#include <chrono>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "pab/cache.hpp"
#include "pab/decision.hpp"
#include "pab/error.hpp"
#include "pab/model.hpp"
#include "pab/parallel.hpp"
#include "pab/tensor.hpp"

namespace pab {

enum class SnapshotPrecision { kF32, kBf16 };

struct TraceRecord {
  std::size_t step = 0;
  double timestep = 0.0;
  std::size_t layer = 0;
  Site site = Site::kSpatialAttn;
  ComponentKind kind = ComponentKind::kSpatialAttn;
  Decision decision;
  bool block_reuse = false;
  std::vector<float> snapshot;  // empty unless snapshots were requested
  double attn_seconds = 0.0;
  double related_seconds = 0.0;
  double mlp_seconds = 0.0;
  FlopCounter flops;
};

struct StepRecord {
  std::size_t step = 0;
  double timestep = 0.0;
  double total_seconds = 0.0;
  double other_seconds = 0.0;  // embeddings, output head, re-shards, updates
};

struct ComponentTrace {
  ModelConfig cfg;
  bool snapshots = false;
  SnapshotPrecision snapshot_precision = SnapshotPrecision::kF32;
  std::vector<TraceRecord> records;
  std::vector<StepRecord> steps;

  std::size_t reuse_records() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.decision.reuse;
    return n;
  }
  FlopCounter total_flops() const {
    FlopCounter c;
    for (const auto& r : records) c += r.flops;
    return c;
  }
};

struct ForwardOptions {
  BroadcastObject mode = BroadcastObject::kOutputs;
  CommMethod method = CommMethod::kDsp;
  MethodConstants constants;
};

// Keeps the upper 16 bits of an IEEE float (bfloat16 truncation).
inline float truncate_bf16(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  bits &= 0xffff0000u;
  std::memcpy(&v, &bits, sizeof bits);
  return v;
}

namespace detail {

template <typename Real>
std::vector<float> snapshot_of(const Latent<Real>& full, SnapshotPrecision prec) {
  std::vector<float> out;
  out.reserve(full.element_count());
  for (const auto& m : full.batch) {
    for (Real v : m.values()) {
      const float f = static_cast<float>(v);
      out.push_back(prec == SnapshotPrecision::kBf16 ? truncate_bf16(f) : f);
    }
  }
  return out;
}

template <typename Real>
const AttnParams<Real>& attn_params(const LayerParams<Real>& lp, Site s) {
  switch (s) {
    case Site::kSpatialAttn: return lp.spatial_attn;
    case Site::kSpatialCross: return lp.spatial_cross;
    case Site::kTemporalAttn: return lp.temporal_attn;
    case Site::kTemporalCross: return lp.temporal_cross;
    default: throw ShapeError("not an attention site");
  }
}

template <typename Real>
const MlpParams<Real>& mlp_params(const LayerParams<Real>& lp, Site s) {
  return s == Site::kSpatialMlp ? lp.spatial_mlp : lp.temporal_mlp;
}

// Runs one site on one batch element's token matrix, either computing it or
// replaying cached scores.
template <typename Real>
SiteResult<Real> run_site(const ModelParams<Real>& p, std::size_t layer, Site site,
                          const Matrix<Real>& x, std::size_t frames,
                          std::size_t tokens, const Matrix<Real>& cond,
                          const Matrix<Real>& text, bool capture,
                          const std::vector<Matrix<Real>>* replay_scores) {
  const auto& lp = p.layers[layer];
  const std::size_t heads = p.cfg.heads;
  switch (site) {
    case Site::kSpatialAttn:
    case Site::kTemporalAttn: {
      const Grouping g = site == Site::kSpatialAttn ? Grouping::kSpatial
                                                    : Grouping::kTemporal;
      if (replay_scores != nullptr) {
        return self_attention_replay_scores(attn_params(lp, site), x, frames,
                                            tokens, g, heads, cond, *replay_scores);
      }
      return self_attention_site(attn_params(lp, site), x, frames, tokens, g,
                                 heads, cond, capture);
    }
    case Site::kSpatialCross:
    case Site::kTemporalCross:
      if (replay_scores != nullptr) {
        return cross_attention_replay_scores(attn_params(lp, site), x.rows(), text,
                                             heads, *replay_scores);
      }
      return cross_attention_site(attn_params(lp, site), x, text, heads, capture);
    case Site::kSpatialMlp:
    case Site::kTemporalMlp: {
      SiteResult<Real> r;
      r.out = mlp_site(mlp_params(lp, site), x, cond);
      return r;
    }
  }
  throw ShapeError("unknown site");
}

}  // namespace detail

// Evaluates the noise prediction for the full latent `x` at timestep `t`.
// `caches` holds one store per worker; `text` one embedded prompt per batch
// element. Trace and ledger are optional sinks.
template <typename Real>
Latent<Real> forward_sharded(const ModelParams<Real>& p, const Latent<Real>& x,
                             double t, const std::vector<Matrix<Real>>& text,
                             const DecisionTable& table, std::size_t step,
                             std::span<CacheStore<Real>> caches,
                             const ShardPlan& plan, const ForwardOptions& opt,
                             ComponentTrace* trace, CommReport* ledger) {
  using Clock = std::chrono::steady_clock;
  const ModelConfig& cfg = p.cfg;
  const auto step_t0 = Clock::now();
  if (x.frames != cfg.frames || x.tokens != cfg.spatial_tokens ||
      x.channels != cfg.hidden) {
    throw ShapeError("latent shape does not match the model config");
  }
  if (text.size() != x.batch_size()) {
    throw ShapeError("need one text embedding per batch element");
  }
  if (caches.size() != plan.workers) {
    throw ShapeError("need one cache store per worker");
  }
  if (step >= table.steps() || table.layers() != cfg.layers) {
    throw ShapeError("decision table does not cover this step/config");
  }
  const std::size_t W = plan.workers;
  const std::size_t B = x.batch_size();
  const bool snapshots = trace != nullptr && trace->snapshots;
  double site_seconds = 0.0;

  const Matrix<Real> cond = conditioning(p, t);
  const Shards<Real> input = scatter_latent(x, plan, Layout::kSpatial);
  Shards<Real> h = input;
  for (auto& shard : h) {
    for (auto& m : shard.batch) m = matmul(m, p.w_in);
  }

  auto add_record = [&](std::size_t layer, Site site, Decision d, bool block_reuse) {
    if (trace == nullptr) return static_cast<TraceRecord*>(nullptr);
    TraceRecord r;
    r.step = step;
    r.timestep = t;
    r.layer = layer;
    r.site = site;
    r.kind = kind_of(site);
    r.decision = d;
    r.block_reuse = block_reuse;
    trace->records.push_back(std::move(r));
    return &trace->records.back();
  };

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const Decision bd = table.block(step, l);
    if (bd.reuse) {
      for (std::size_t w = 0; w < W; ++w) {
        const auto& e = caches[w].fetch(CacheKey::block(l), bd.source);
        for (std::size_t b = 0; b < B; ++b) add_inplace(h[w].batch[b], e.outputs[b]);
      }
      for (Site s : cfg.sites()) add_record(l, s, bd, true);
      if (ledger != nullptr) {
        ledger->entries.push_back({step, l, opt.method, 0.0, 0.0, false});
      }
      continue;
    }
    const bool keep_delta = table.block_referenced(step, l);
    const Shards<Real> block_in = keep_delta ? h : Shards<Real>{};
    double layer_elements = 0.0;
    bool exchanged = false;

    for (Site site : cfg.sites()) {
      const ComponentKind kind = kind_of(site);
      const Decision d = table.at(step, l, kind);
      const CacheKey key = CacheKey::site(l, site);
      const bool referenced = !d.reuse && table.referenced(step, l, kind);
      const bool is_attn = kind != ComponentKind::kMlp;
      const bool capture = referenced && is_attn && opt.mode == BroadcastObject::kScores;
      const bool replay_scores = d.reuse && is_attn && opt.mode == BroadcastObject::kScores;
      TraceRecord* rec = add_record(l, site, d, false);
      const auto site_t0 = Clock::now();

      const bool temporal = site == Site::kTemporalAttn;
      const bool exchange = temporal && temporal_exchange_needed(table, step, l, opt.mode);

      // Outputs in the residual (spatial) layout, one latent per worker.
      Shards<Real> out_shards;
      if (d.reuse && !replay_scores) {
        out_shards.resize(W);
        for (std::size_t w = 0; w < W; ++w) {
          const auto& e = caches[w].fetch(key, d.source);
          out_shards[w] = Latent<Real>(B, h[w].frames, h[w].tokens, cfg.hidden);
          out_shards[w].batch = e.outputs;
        }
      } else {
        std::uint64_t moved = 0;
        Shards<Real> resharded;
        if (exchange) {
          resharded = reshard(h, plan, Layout::kSpatial, Layout::kTemporal, moved);
        }
        const Shards<Real>& work_in = exchange ? resharded : h;
        Shards<Real> work_out(W);
        std::vector<std::vector<std::vector<Matrix<Real>>>> scores(W);
        for (std::size_t w = 0; w < W; ++w) {
          const auto& in = work_in[w];
          work_out[w] = Latent<Real>(B, in.frames, in.tokens, cfg.hidden);
          const CacheEntry<Real>* cached =
              replay_scores ? &caches[w].fetch(key, d.source) : nullptr;
          if (cached != nullptr && !cached->has_scores()) {
            throw PolicyError("scores replay requested but the cache holds only outputs");
          }
          for (std::size_t b = 0; b < B; ++b) {
            FlopCounter counter;
            SiteResult<Real> r;
            {
              FlopCounterScope scope(&counter);
              r = detail::run_site(p, l, site, in.batch[b], in.frames, in.tokens,
                                   cond, text[b], capture,
                                   cached != nullptr ? &cached->scores[b] : nullptr);
            }
            if (rec != nullptr) {
              rec->flops += counter;
              rec->attn_seconds += r.attn_seconds;
              rec->related_seconds += r.related_seconds;
            }
            work_out[w].batch[b] = std::move(r.out);
            if (capture) scores[w].push_back(std::move(r.scores));
          }
        }
        out_shards = exchange ? reshard(work_out, plan, Layout::kTemporal,
                                        Layout::kSpatial, moved)
                              : std::move(work_out);
        if (exchange) {
          exchanged = true;
          layer_elements += static_cast<double>(moved) *
                            static_cast<double>(opt.constants[opt.method]) / 2.0;
          if (ledger != nullptr) ledger->reshard_events += 2;
        }
        if (referenced) {
          for (std::size_t w = 0; w < W; ++w) {
            CacheEntry<Real> e;
            e.source_step = static_cast<int>(step);
            e.outputs = out_shards[w].batch;
            if (capture) e.scores = std::move(scores[w]);
            caches[w].store(key, std::move(e));
          }
        }
      }

      for (std::size_t w = 0; w < W; ++w) {
        for (std::size_t b = 0; b < B; ++b) {
          add_inplace(h[w].batch[b], out_shards[w].batch[b]);
        }
      }
      const double elapsed =
          std::chrono::duration<double>(Clock::now() - site_t0).count();
      site_seconds += elapsed;
      if (rec != nullptr) {
        if (kind == ComponentKind::kMlp) rec->mlp_seconds = elapsed;
        if (snapshots) {
          rec->snapshot = detail::snapshot_of(
              gather_latent(out_shards, plan, Layout::kSpatial),
              trace->snapshot_precision);
        }
      }
    }

    if (keep_delta) {
      for (std::size_t w = 0; w < W; ++w) {
        CacheEntry<Real> e;
        e.source_step = static_cast<int>(step);
        for (std::size_t b = 0; b < B; ++b) {
          e.outputs.push_back(subtract(h[w].batch[b], block_in[w].batch[b]));
        }
        caches[w].store(CacheKey::block(l), std::move(e));
      }
    }
    if (ledger != nullptr) {
      const double bpe = static_cast<double>(sizeof(Real));
      ledger->entries.push_back(
          {step, l, opt.method, layer_elements, layer_elements * bpe, exchanged});
    }
  }

  Shards<Real> eps(W);
  for (std::size_t w = 0; w < W; ++w) {
    eps[w] = input[w];
    for (std::size_t b = 0; b < B; ++b) {
      add_inplace(eps[w].batch[b], output_head(p, h[w].batch[b], cond));
    }
  }
  Latent<Real> result = gather_latent(eps, plan, Layout::kSpatial);

  if (trace != nullptr) {
    StepRecord sr;
    sr.step = step;
    sr.timestep = t;
    sr.total_seconds =
        std::chrono::duration<double>(Clock::now() - step_t0).count();
    sr.other_seconds = std::max(0.0, sr.total_seconds - site_seconds);
    trace->steps.push_back(sr);
  }
  return result;
}

// Serial evaluation: a single worker with one cache store.
template <typename Real>
Latent<Real> forward_step(const ModelParams<Real>& p, const Latent<Real>& x,
                          double t, const std::vector<Matrix<Real>>& text,
                          const DecisionTable& table, std::size_t step,
                          CacheStore<Real>& cache, ComponentTrace* trace = nullptr,
                          const ForwardOptions& opt = {}) {
  const ShardPlan plan = plan_shards(1, p.cfg);
  return forward_sharded(p, x, t, text, table, step,
                         std::span<CacheStore<Real>>(&cache, 1), plan, opt,
                         trace, nullptr);
}

}  // namespace pab

#endif  // PAB_ENGINE_HPP_
