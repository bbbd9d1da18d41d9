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

// Logical sequence parallelism: shard layouts, the all-to-all re-shard that
// surrounds temporal attention, and the closed-form communication volume
// model for Megatron-SP, DS-Ulysses, DSP and broadcast sequence parallelism.

#ifndef PAB_PARALLEL_HPP_
#define PAB_PARALLEL_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pab/decision.hpp"
#include "pab/error.hpp"
#include "pab/model_config.hpp"
#include "pab/schedule.hpp"
#include "pab/tensor.hpp"

namespace pab {

enum class CommMethod { kMegatronSp = 0, kDsUlysses, kDsp, kBroadcastSp };

inline constexpr std::array<CommMethod, 4> kAllMethods = {
    CommMethod::kMegatronSp, CommMethod::kDsUlysses, CommMethod::kDsp,
    CommMethod::kBroadcastSp};

inline const char* method_name(CommMethod m) {
  switch (m) {
    case CommMethod::kMegatronSp: return "megatron_sp";
    case CommMethod::kDsUlysses: return "ds_ulysses";
    case CommMethod::kDsp: return "dsp";
    case CommMethod::kBroadcastSp: return "broadcast_sp";
  }
  return "?";
}

inline std::optional<CommMethod> parse_method(std::string_view s) {
  for (auto m : kAllMethods) {
    if (s == method_name(m)) return m;
  }
  return std::nullopt;
}

// Volume per communicating layer-pair step, in units of one full all-to-all
// (B*T*S*D*(W-1)/W elements). Calibrated so megatron : ulysses : dsp is
// 8 : 2 : 1; broadcast_sp moves what DSP moves but only on steps that
// compute temporal attention.
struct MethodConstants {
  std::array<std::uint64_t, 4> units = {16, 4, 2, 2};

  std::uint64_t operator[](CommMethod m) const {
    return units[static_cast<int>(m)];
  }
};

enum class Layout { kSpatial, kTemporal };

// Spatial phase: worker w holds frames [w*T/W, (w+1)*T/W) x all S tokens.
// Temporal phase: worker w holds all T frames x tokens [w*S/W, (w+1)*S/W).
struct ShardPlan {
  std::size_t workers = 1;
  std::size_t frames = 1;
  std::size_t tokens = 1;

  std::size_t frames_per_worker() const { return frames / workers; }
  std::size_t tokens_per_worker() const { return tokens / workers; }

  std::size_t owner(Layout layout, std::size_t t, std::size_t s) const {
    return layout == Layout::kSpatial ? t / frames_per_worker()
                                      : s / tokens_per_worker();
  }

  bool operator==(const ShardPlan&) const = default;
};

inline ShardPlan plan_shards(std::size_t workers, const ModelConfig& cfg) {
  if (workers < 1) throw ValidationError("workers must be >= 1");
  if (cfg.frames % workers != 0 || cfg.spatial_tokens % workers != 0) {
    throw ValidationError("workers (" + std::to_string(workers) +
                              ") must divide frames (" +
                              std::to_string(cfg.frames) +
                              ") and spatial tokens (" +
                              std::to_string(cfg.spatial_tokens) + ")",
                          "indivisible-shards");
  }
  return ShardPlan{workers, cfg.frames, cfg.spatial_tokens};
}

template <typename Real>
using Shards = std::vector<Latent<Real>>;

// Splits a full latent into per-worker shards of the given layout.
template <typename Real>
Shards<Real> scatter_latent(const Latent<Real>& full, const ShardPlan& plan,
                            Layout layout) {
  const std::size_t tw = layout == Layout::kSpatial ? plan.frames_per_worker() : plan.frames;
  const std::size_t sw = layout == Layout::kSpatial ? plan.tokens : plan.tokens_per_worker();
  Shards<Real> shards(plan.workers,
                      Latent<Real>(full.batch_size(), tw, sw, full.channels));
  for (std::size_t b = 0; b < full.batch_size(); ++b) {
    for (std::size_t t = 0; t < plan.frames; ++t) {
      for (std::size_t s = 0; s < plan.tokens; ++s) {
        const std::size_t w = plan.owner(layout, t, s);
        const std::size_t lt = layout == Layout::kSpatial ? t % tw : t;
        const std::size_t ls = layout == Layout::kSpatial ? s : s % sw;
        const Real* src = full.batch[b].row(t * plan.tokens + s);
        std::copy(src, src + full.channels,
                  shards[w].batch[b].row(lt * sw + ls));
      }
    }
  }
  return shards;
}

template <typename Real>
Latent<Real> gather_latent(const Shards<Real>& shards, const ShardPlan& plan,
                           Layout layout) {
  const auto& first = shards.at(0);
  Latent<Real> full(first.batch_size(), plan.frames, plan.tokens, first.channels);
  const std::size_t tw = first.frames, sw = first.tokens;
  for (std::size_t b = 0; b < full.batch_size(); ++b) {
    for (std::size_t t = 0; t < plan.frames; ++t) {
      for (std::size_t s = 0; s < plan.tokens; ++s) {
        const std::size_t w = plan.owner(layout, t, s);
        const std::size_t lt = layout == Layout::kSpatial ? t % tw : t;
        const std::size_t ls = layout == Layout::kSpatial ? s : s % sw;
        const Real* src = shards[w].batch[b].row(lt * sw + ls);
        std::copy(src, src + full.channels, full.batch[b].row(t * plan.tokens + s));
      }
    }
  }
  return full;
}

// All-to-all between layouts. Returns the new shards and adds the number of
// elements that changed owner to `moved`.
template <typename Real>
Shards<Real> reshard(const Shards<Real>& shards, const ShardPlan& plan,
                     Layout from, Layout to, std::uint64_t& moved) {
  if (shards.size() != plan.workers) {
    throw ShapeError("reshard: shard count does not match the plan");
  }
  const auto& first = shards[0];
  const std::size_t want_t = from == Layout::kSpatial ? plan.frames_per_worker() : plan.frames;
  const std::size_t want_s = from == Layout::kSpatial ? plan.tokens : plan.tokens_per_worker();
  for (const auto& sh : shards) {
    if (sh.frames != want_t || sh.tokens != want_s) {
      throw ShapeError("reshard: shards are not in the stated source layout");
    }
  }
  const std::size_t bd = first.batch_size() * first.channels;
  for (std::size_t t = 0; t < plan.frames; ++t) {
    for (std::size_t s = 0; s < plan.tokens; ++s) {
      if (plan.owner(from, t, s) != plan.owner(to, t, s)) moved += bd;
    }
  }
  if (from == to) return shards;
  return scatter_latent(gather_latent(shards, plan, from), plan, to);
}

// ---------------------------------------------------------------------------
// Communication reports
// ---------------------------------------------------------------------------

struct CommEntry {
  std::size_t step = 0;
  std::size_t layer = 0;
  CommMethod method = CommMethod::kDsp;
  double elements = 0.0;
  double bytes = 0.0;
  bool communicating = false;

  bool operator==(const CommEntry&) const = default;
};

struct CommReport {
  CommMethod method = CommMethod::kDsp;
  std::size_t workers = 1;
  std::uint64_t method_units = 0;
  std::vector<CommEntry> entries;  // one per (step, layer), step-major
  std::size_t reshard_events = 0;  // executed runs only

  double total_elements() const {
    double t = 0.0;
    for (const auto& e : entries) t += e.elements;
    return t;
  }
  double total_bytes() const {
    double t = 0.0;
    for (const auto& e : entries) t += e.bytes;
    return t;
  }
  std::size_t communicating_cells() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.communicating;
    return n;
  }
};

enum class BroadcastObject { kOutputs, kScores };

// Temporal attention needs the token-sharded layout whenever it computes.
// Replaying cached scores still needs fresh values in that layout; replaying
// outputs needs nothing.
inline bool temporal_exchange_needed(const DecisionTable& table, std::size_t step,
                                     std::size_t layer, BroadcastObject mode) {
  if (table.block(step, layer).reuse) return false;
  const Decision d = table.at(step, layer, ComponentKind::kTemporalAttn);
  return !d.reuse || mode == BroadcastObject::kScores;
}

inline CommReport comm_volume_model(CommMethod method, const ModelConfig& cfg,
                                    const TimestepSchedule& schedule,
                                    const DecisionTable& table,
                                    std::size_t workers, std::size_t batch,
                                    std::size_t bytes_per_element,
                                    BroadcastObject mode = BroadcastObject::kOutputs,
                                    const MethodConstants& constants = {}) {
  plan_shards(workers, cfg);
  if (schedule.size() != table.steps() || table.layers() != cfg.layers) {
    throw ShapeError("comm model: table does not match schedule/config");
  }
  CommReport report;
  report.method = method;
  report.workers = workers;
  report.method_units = constants[method];
  const double unit = static_cast<double>(batch * cfg.frames *
                                          cfg.spatial_tokens * cfg.hidden) *
                      static_cast<double>(workers - 1) / static_cast<double>(workers);
  for (std::size_t s = 0; s < table.steps(); ++s) {
    for (std::size_t l = 0; l < table.layers(); ++l) {
      CommEntry e;
      e.step = s;
      e.layer = l;
      e.method = method;
      e.communicating = temporal_exchange_needed(table, s, l, mode);
      e.elements = e.communicating ? static_cast<double>(constants[method]) * unit : 0.0;
      e.bytes = e.elements * static_cast<double>(bytes_per_element);
      report.entries.push_back(e);
    }
  }
  return report;
}

}  // namespace pab

#endif  // PAB_PARALLEL_HPP_
