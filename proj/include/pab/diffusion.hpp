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

// Forward noising and the deterministic reverse sampler (DDIM, eta = 0)
// that drives the engine under a caching policy.

#ifndef PAB_DIFFUSION_HPP_
#define PAB_DIFFUSION_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "pab/cache.hpp"
#include "pab/decision.hpp"
#include "pab/engine.hpp"
#include "pab/error.hpp"
#include "pab/model.hpp"
#include "pab/parallel.hpp"
#include "pab/policy.hpp"
#include "pab/schedule.hpp"
#include "pab/tensor.hpp"

namespace pab {

inline constexpr std::uint64_t kNoiseStreamSalt = 0xD1B54A32D192ED03ull;

// x_t = sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * z
template <typename Real>
Latent<Real> add_noise(const Latent<Real>& x0, const Latent<Real>& noise,
                       double alpha_bar) {
  if (!x0.same_shape(noise)) throw ShapeError("add_noise: shape mismatch");
  const Real a = static_cast<Real>(std::sqrt(alpha_bar));
  const Real s = static_cast<Real>(std::sqrt(1.0 - alpha_bar));
  Latent<Real> out = x0;
  for (std::size_t b = 0; b < out.batch_size(); ++b) {
    auto o = out.batch[b].values();
    auto z = noise.batch[b].values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * o[i] + s * z[i];
  }
  return out;
}

template <typename Real>
Latent<Real> add_noise(const Latent<Real>& x0, const Latent<Real>& noise,
                       const TimestepSchedule& schedule, std::size_t t_index) {
  return add_noise(x0, noise, NoiseSchedule().alpha_bar(schedule.timesteps.at(t_index)));
}

// One DDIM (eta = 0) update:
//   x0_hat = (x - sqrt(1 - ab) * eps) / sqrt(ab)
//   x_next = sqrt(ab_next) * x0_hat + sqrt(1 - ab_next) * eps
template <typename Real>
Latent<Real> ddim_update(const Latent<Real>& x, const Latent<Real>& eps,
                         double alpha_bar, double alpha_bar_next) {
  if (!x.same_shape(eps)) throw ShapeError("ddim_update: shape mismatch");
  const Real sa = static_cast<Real>(std::sqrt(alpha_bar));
  const Real s1 = static_cast<Real>(std::sqrt(1.0 - alpha_bar));
  const Real na = static_cast<Real>(std::sqrt(alpha_bar_next));
  const Real n1 = static_cast<Real>(std::sqrt(1.0 - alpha_bar_next));
  Latent<Real> out = x;
  for (std::size_t b = 0; b < out.batch_size(); ++b) {
    auto o = out.batch[b].values();
    auto e = eps.batch[b].values();
    for (std::size_t i = 0; i < o.size(); ++i) {
      const Real x0 = (o[i] - s1 * e[i]) / sa;
      o[i] = na * x0 + n1 * e[i];
    }
  }
  return out;
}

// eps_uncond + scale * (eps_cond - eps_uncond), batch 0 conditional.
template <typename Real>
Latent<Real> guide(const Latent<Real>& pair, double scale) {
  if (pair.batch_size() != 2) throw ShapeError("guidance needs a batch of two");
  const Real g = static_cast<Real>(scale);
  Latent<Real> out(1, pair.frames, pair.tokens, pair.channels);
  auto c = pair.batch[0].values();
  auto u = pair.batch[1].values();
  auto o = out.batch[0].values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = u[i] + g * (c[i] - u[i]);
  return out;
}

inline std::vector<int> default_text(const ModelConfig& cfg) {
  std::vector<int> ids(cfg.text_tokens);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ids[i] = 1 + static_cast<int>((7 * i + 3) % (cfg.vocab - 1 == 0 ? 1 : cfg.vocab - 1));
  }
  return ids;
}

// The unconditional prompt: every position holds token 0.
inline std::vector<int> null_text(const ModelConfig& cfg) {
  return std::vector<int>(cfg.text_tokens, 0);
}

struct SamplerOptions {
  bool guidance = true;
  double guidance_scale = 4.0;
  BroadcastObject mode = BroadcastObject::kOutputs;
  std::vector<int> text;  // empty selects default_text
  bool trace = true;
  bool snapshots = false;
  SnapshotPrecision snapshot_precision = SnapshotPrecision::kF32;
  std::size_t workers = 1;
  CommMethod method = CommMethod::kDsp;
  MethodConstants constants;
};

template <typename Real>
struct SampleResult {
  Latent<Real> latent;
  DecisionTable table;
  ComponentTrace trace;
  CommReport comm;              // executed re-shard ledger
  std::vector<CacheStore<Real>> caches;  // per worker, state after the run
};

template <typename Real>
Latent<Real> initial_noise(const ModelConfig& cfg, std::uint64_t seed) {
  RandomStream rng(seed ^ kNoiseStreamSalt);
  return gaussian_latent<Real>(rng, 1, cfg.frames, cfg.spatial_tokens, cfg.hidden);
}

// Runs the full reverse process under a prebuilt decision table.
template <typename Real>
SampleResult<Real> sample_with_table(const ModelParams<Real>& params,
                                     const TimestepSchedule& schedule,
                                     const DecisionTable& table,
                                     std::uint64_t seed,
                                     const SamplerOptions& opt = {}) {
  const ModelConfig& cfg = params.cfg;
  if (table.steps() != schedule.size() || table.layers() != cfg.layers) {
    throw ShapeError("decision table does not match schedule/config");
  }
  table.validate();
  const ShardPlan plan = plan_shards(opt.workers, cfg);
  const NoiseSchedule noise;

  std::vector<Matrix<Real>> text;
  text.push_back(embed_text(params, opt.text.empty() ? default_text(cfg) : opt.text));
  if (opt.guidance) text.push_back(embed_text(params, null_text(cfg)));

  SampleResult<Real> res;
  res.table = table;
  res.trace.cfg = cfg;
  res.trace.snapshots = opt.snapshots;
  res.trace.snapshot_precision = opt.snapshot_precision;
  res.comm.method = opt.method;
  res.comm.workers = opt.workers;
  res.comm.method_units = opt.constants[opt.method];
  res.caches.resize(opt.workers);

  ForwardOptions fwd;
  fwd.mode = opt.mode;
  fwd.method = opt.method;
  fwd.constants = opt.constants;

  Latent<Real> x = initial_noise<Real>(cfg, seed);
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const double t = schedule[i];
    Latent<Real> input = x;
    if (opt.guidance) input.batch.push_back(x.batch[0]);
    const Latent<Real> out = forward_sharded(
        params, input, t, text, table, i,
        std::span<CacheStore<Real>>(res.caches), plan, fwd,
        opt.trace ? &res.trace : nullptr, &res.comm);
    const Latent<Real> eps = opt.guidance ? guide(out, opt.guidance_scale) : out;
    const double ab = noise.alpha_bar(t);
    const double ab_next = i + 1 < schedule.size() ? noise.alpha_bar(schedule[i + 1]) : 1.0;
    x = ddim_update(x, eps, ab, ab_next);
  }
  res.latent = std::move(x);
  return res;
}

template <typename Real>
SampleResult<Real> sample(const ModelParams<Real>& params,
                          const TimestepSchedule& schedule,
                          const PolicyConfig& policy, std::uint64_t seed,
                          const SamplerOptions& opt = {}) {
  return sample_with_table(params, schedule,
                           build_schedule(policy, schedule, params.cfg.layers),
                           seed, opt);
}

// Sampler with the residual stream split over `workers` logical workers.
template <typename Real>
SampleResult<Real> run_parallel(const ModelParams<Real>& params,
                                const TimestepSchedule& schedule,
                                const PolicyConfig& policy, std::size_t workers,
                                CommMethod method, std::uint64_t seed,
                                SamplerOptions opt = {}) {
  if (method == CommMethod::kBroadcastSp &&
      !std::holds_alternative<PabConfig>(policy)) {
    throw ValidationError("broadcast_sp requires a pab policy");
  }
  opt.workers = workers;
  opt.method = method;
  return sample(params, schedule, policy, seed, opt);
}

}  // namespace pab

#endif  // PAB_DIFFUSION_HPP_
