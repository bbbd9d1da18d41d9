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

// Caching policies and the decision tables they produce.
//
//   None      every site computes at every step.
//   Pab       pyramid attention broadcast: per-kind broadcast ranges inside a
//             timestep window, plus MLP broadcast triggered at given
//             timesteps for selected layers.
//   TGate     self-attention cached at an interval before the gate step,
//             cross attention frozen after it.
//   DeltaDit  whole-block residual deltas reused for a front block range
//             before the gate step.

#ifndef PAB_POLICY_HPP_
#define PAB_POLICY_HPP_

#include <algorithm>
#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pab/decision.hpp"
#include "pab/error.hpp"
#include "pab/model_config.hpp"
#include "pab/parallel.hpp"
#include "pab/schedule.hpp"

namespace pab {

// period:      range r computes once every r steps (r - 1 reuses).
// reuse-count: range r computes once then reuses r times (period r + 1).
enum class RangeSemantics { kPeriod, kReuseCount };

inline const char* semantics_name(RangeSemantics s) {
  return s == RangeSemantics::kPeriod ? "period" : "reuse-count";
}

inline std::optional<RangeSemantics> parse_semantics(std::string_view s) {
  if (s == "period") return RangeSemantics::kPeriod;
  if (s == "reuse-count") return RangeSemantics::kReuseCount;
  return std::nullopt;
}

inline int broadcast_period(int range, RangeSemantics s) {
  return s == RangeSemantics::kPeriod ? range : range + 1;
}

struct MlpBroadcast {
  std::vector<double> timesteps;  // trigger timesteps on the 1000 scale
  std::vector<int> blocks;        // layer-pair indices
  int range = 0;                  // 0 disables MLP broadcast

  bool operator==(const MlpBroadcast&) const = default;
};

struct NoPolicy {
  bool operator==(const NoPolicy&) const = default;
};

struct PabConfig {
  int spatial_range = 1;
  int temporal_range = 1;
  int cross_range = 1;
  double window_hi = 930.0;
  double window_lo = 450.0;
  MlpBroadcast mlp;
  RangeSemantics semantics = RangeSemantics::kPeriod;
  std::array<bool, kNumKinds> disabled{};  // per ComponentKind

  int range(ComponentKind k) const {
    switch (k) {
      case ComponentKind::kSpatialAttn: return spatial_range;
      case ComponentKind::kTemporalAttn: return temporal_range;
      case ComponentKind::kCrossAttn: return cross_range;
      case ComponentKind::kMlp: return mlp.range;
    }
    return 1;
  }
  bool is_disabled(ComponentKind k) const {
    return disabled[static_cast<int>(k)];
  }
  // True when the kind can produce a Reuse at all.
  bool broadcasts(ComponentKind k) const {
    if (is_disabled(k)) return false;
    if (k == ComponentKind::kMlp) {
      return broadcast_period(mlp.range, semantics) > 1 && !mlp.timesteps.empty() &&
             !mlp.blocks.empty() && mlp.range > 0;
    }
    return broadcast_period(range(k), semantics) > 1;
  }

  bool operator==(const PabConfig&) const = default;
};

struct TGateConfig {
  int gate_step = 12;
  int interval = 2;
  int warmup = 2;

  bool operator==(const TGateConfig&) const = default;
};

struct DeltaDitConfig {
  int gate_step = 25;
  int interval = 2;
  int block_lo = 0;
  int block_hi = 5;  // inclusive

  bool operator==(const DeltaDitConfig&) const = default;
};

using PolicyConfig = std::variant<NoPolicy, PabConfig, TGateConfig, DeltaDitConfig>;

inline const char* policy_type_name(const PolicyConfig& p) {
  switch (p.index()) {
    case 0: return "none";
    case 1: return "pab";
    case 2: return "tgate";
    case 3: return "deltadit";
  }
  return "?";
}

inline void validate_policy(const PolicyConfig& policy, std::size_t steps,
                            std::size_t layers) {
  const int n = static_cast<int>(steps);
  const int nl = static_cast<int>(layers);
  if (const auto* pab = std::get_if<PabConfig>(&policy)) {
    for (auto k : {ComponentKind::kSpatialAttn, ComponentKind::kTemporalAttn,
                   ComponentKind::kCrossAttn}) {
      if (pab->range(k) < 1) {
        throw ValidationError(std::string(kind_name(k)) + " range must be >= 1");
      }
    }
    if (pab->window_hi > kMaxTimestep || pab->window_lo < 0.0) {
      throw ValidationError("broadcast window must lie within [0, 1000]");
    }
    if (!(pab->window_hi > pab->window_lo)) {
      throw ValidationError("broadcast window needs hi > lo");
    }
    if (pab->mlp.range < 0) throw ValidationError("mlp range must be >= 0");
    if (pab->mlp.range > 0 && pab->mlp.timesteps.empty()) {
      throw ValidationError("mlp broadcast range set but no trigger timesteps");
    }
    for (double t : pab->mlp.timesteps) {
      if (t < 0.0 || t > kMaxTimestep) {
        throw ValidationError("mlp trigger timestep outside [0, 1000]");
      }
    }
    for (int b : pab->mlp.blocks) {
      if (b < 0 || b >= nl) {
        throw ValidationError("mlp block index " + std::to_string(b) +
                              " outside [0, " + std::to_string(nl) + ")");
      }
    }
  } else if (const auto* tg = std::get_if<TGateConfig>(&policy)) {
    if (tg->gate_step < 1 || tg->interval < 1 || tg->warmup < 0) {
      throw ValidationError("tgate needs gate_step >= 1, interval >= 1, warmup >= 0");
    }
    if (tg->gate_step > n) {
      throw ValidationError("tgate gate_step exceeds the number of steps");
    }
  } else if (const auto* dd = std::get_if<DeltaDitConfig>(&policy)) {
    if (dd->gate_step < 1 || dd->interval < 1) {
      throw ValidationError("deltadit needs gate_step >= 1 and interval >= 1");
    }
    if (dd->gate_step > n) {
      throw ValidationError("deltadit gate_step exceeds the number of steps");
    }
    if (dd->block_lo < 0 || dd->block_hi < dd->block_lo || dd->block_hi >= nl) {
      throw ValidationError("deltadit block range must lie within [0, " +
                            std::to_string(nl) + ")");
    }
  }
}

namespace detail {

inline void fill_pab(const PabConfig& pab, const TimestepSchedule& schedule,
                     DecisionTable& table) {
  const std::size_t n = schedule.size();
  auto in_window = [&](std::size_t i) {
    return schedule[i] <= pab.window_hi && schedule[i] >= pab.window_lo;
  };
  for (auto k : {ComponentKind::kSpatialAttn, ComponentKind::kTemporalAttn,
                 ComponentKind::kCrossAttn}) {
    if (!pab.broadcasts(k)) continue;
    const int period = broadcast_period(pab.range(k), pab.semantics);
    // In-window steps are contiguous because timesteps strictly decrease.
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_window(i)) continue;
      const std::size_t phase = pos % static_cast<std::size_t>(period);
      if (phase != 0) table.set_all_layers(i, k, Decision::reuse_from(int(i - phase)));
      ++pos;
    }
  }

  if (!pab.broadcasts(ComponentKind::kMlp)) return;
  const int period = broadcast_period(pab.mlp.range, pab.semantics);
  std::vector<bool> trigger(n, false);
  for (double t : pab.mlp.timesteps) trigger[schedule.nearest_step(t)] = true;
  int last = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (trigger[i]) {
      last = static_cast<int>(i);
      continue;
    }
    if (last >= 0 && static_cast<int>(i) - last < period) {
      for (int b : pab.mlp.blocks) {
        table.set(i, static_cast<std::size_t>(b), ComponentKind::kMlp,
                  Decision::reuse_from(last));
      }
    }
  }
}

inline void fill_tgate(const TGateConfig& tg, DecisionTable& table) {
  const std::size_t m = static_cast<std::size_t>(tg.gate_step);
  const std::size_t w = static_cast<std::size_t>(tg.warmup);
  const std::size_t k = static_cast<std::size_t>(tg.interval);
  for (std::size_t i = 0; i < table.steps(); ++i) {
    if (i < m) {
      if (i >= w && (i - w) % k != 0) {
        const int src = static_cast<int>(i - (i - w) % k);
        table.set_all_layers(i, ComponentKind::kSpatialAttn, Decision::reuse_from(src));
        table.set_all_layers(i, ComponentKind::kTemporalAttn, Decision::reuse_from(src));
      }
    } else {
      table.set_all_layers(i, ComponentKind::kCrossAttn,
                           Decision::reuse_from(static_cast<int>(m) - 1));
    }
  }
}

inline void fill_deltadit(const DeltaDitConfig& dd, DecisionTable& table) {
  const std::size_t b = static_cast<std::size_t>(dd.gate_step);
  const std::size_t k = static_cast<std::size_t>(dd.interval);
  for (std::size_t i = 0; i < std::min(b, table.steps()); ++i) {
    const std::size_t phase = i % k;
    if (phase == 0) continue;
    for (int l = dd.block_lo; l <= dd.block_hi; ++l) {
      table.set_block(i, static_cast<std::size_t>(l),
                      Decision::reuse_from(static_cast<int>(i - phase)));
    }
  }
}

}  // namespace detail

inline DecisionTable build_schedule(const PolicyConfig& policy,
                                    const TimestepSchedule& schedule,
                                    std::size_t layers) {
  validate_policy(policy, schedule.size(), layers);
  DecisionTable table(schedule.size(), layers);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, PabConfig>) {
          detail::fill_pab(p, schedule, table);
        } else if constexpr (std::is_same_v<T, TGateConfig>) {
          detail::fill_tgate(p, table);
        } else if constexpr (std::is_same_v<T, DeltaDitConfig>) {
          detail::fill_deltadit(p, table);
        }
      },
      policy);
  table.validate();
  return table;
}

// Broadcast disabled for the listed kinds only.
inline PabConfig without_kinds(PabConfig pab, const std::vector<ComponentKind>& kinds) {
  for (auto k : kinds) pab.disabled[static_cast<int>(k)] = true;
  return pab;
}

// Peak bytes of simultaneously live cache entries. An entry is live from
// the step that computes it through the last step that replays it; sites
// that are never replayed are not cached.
inline std::size_t memory_footprint(const DecisionTable& table,
                                    const ModelConfig& cfg, std::size_t batch,
                                    std::size_t bytes_per_element,
                                    BroadcastObject mode = BroadcastObject::kOutputs) {
  const std::size_t n = table.steps();
  const std::size_t T = cfg.frames, S = cfg.spatial_tokens, D = cfg.hidden,
                    H = cfg.heads, M = cfg.text_tokens;
  const std::size_t output_elems = batch * T * S * D;
  auto site_elems = [&](ComponentKind k) {
    std::size_t e = output_elems;
    if (mode == BroadcastObject::kScores) {
      switch (k) {
        case ComponentKind::kSpatialAttn: e += batch * T * H * S * S; break;
        case ComponentKind::kTemporalAttn: e += batch * S * H * T * T; break;
        case ComponentKind::kCrossAttn: e += batch * T * S * H * M; break;
        case ComponentKind::kMlp: break;
      }
    }
    return e;
  };
  auto sites_of = [&](ComponentKind k) -> std::size_t {
    switch (k) {
      case ComponentKind::kCrossAttn: return cfg.cross_in_temporal ? 2 : 1;
      case ComponentKind::kMlp: return 2;
      default: return 1;
    }
  };

  std::vector<std::size_t> live(n, 0);
  auto add_interval = [&](std::size_t from, std::size_t to, std::size_t elems) {
    for (std::size_t i = from; i <= to; ++i) live[i] += elems * bytes_per_element;
  };
  for (std::size_t l = 0; l < table.layers(); ++l) {
    for (auto k : kAllKinds) {
      for (std::size_t s = 0; s < n; ++s) {
        std::size_t last = s;
        for (std::size_t j = s + 1; j < n; ++j) {
          const Decision d = table.at(j, l, k);
          if (d.reuse && d.source == static_cast<int>(s)) last = j;
        }
        if (last > s) add_interval(s, last, site_elems(k) * sites_of(k));
      }
    }
    for (std::size_t s = 0; s < n; ++s) {
      std::size_t last = s;
      for (std::size_t j = s + 1; j < n; ++j) {
        const Decision d = table.block(j, l);
        if (d.reuse && d.source == static_cast<int>(s)) last = j;
      }
      if (last > s) add_interval(s, last, output_elems);
    }
  }
  return live.empty() ? 0 : *std::max_element(live.begin(), live.end());
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

struct Preset {
  std::string name;
  PolicyConfig policy;
};

namespace detail {

inline PabConfig pab_preset(int s, int t, int c, double hi, double lo,
                            std::vector<double> mlp_timesteps, int mlp_blocks) {
  PabConfig p;
  p.spatial_range = s;
  p.temporal_range = t;
  p.cross_range = c;
  p.window_hi = hi;
  p.window_lo = lo;
  p.mlp.timesteps = std::move(mlp_timesteps);
  for (int b = 0; b < mlp_blocks; ++b) p.mlp.blocks.push_back(b);
  p.mlp.range = 2;
  return p;
}

}  // namespace detail

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> kPresets = [] {
    const std::vector<double> opensora_mlp = {864, 788, 676};
    const std::vector<double> plan_mlp = {738, 714, 690, 666, 642, 618, 594,
                                          570, 546, 522, 498, 474, 450, 426};
    const std::vector<double> latte_mlp = {720, 640, 560, 480, 400};
    using detail::pab_preset;
    std::vector<Preset> v;
    v.push_back({"opensora-pab246", pab_preset(2, 4, 6, 930, 450, opensora_mlp, 5)});
    v.push_back({"opensora-pab357", pab_preset(3, 5, 7, 930, 450, opensora_mlp, 5)});
    v.push_back({"opensora-pab579", pab_preset(5, 7, 9, 930, 450, opensora_mlp, 5)});
    v.push_back({"opensoraplan-pab246", pab_preset(2, 4, 6, 850, 100, plan_mlp, 7)});
    v.push_back({"opensoraplan-pab357", pab_preset(3, 5, 7, 850, 100, plan_mlp, 7)});
    v.push_back({"opensoraplan-pab579", pab_preset(5, 7, 9, 850, 100, plan_mlp, 7)});
    v.push_back({"latte-pab235", pab_preset(2, 3, 5, 800, 100, latte_mlp, 5)});
    v.push_back({"latte-pab347", pab_preset(3, 4, 7, 800, 100, latte_mlp, 5)});
    v.push_back({"latte-pab469", pab_preset(4, 6, 9, 800, 100, latte_mlp, 5)});
    v.push_back({"tgate-default", TGateConfig{12, 2, 2}});
    v.push_back({"deltadit-default", DeltaDitConfig{25, 2, 0, 5}});
    v.push_back({"none", NoPolicy{}});
    return v;
  }();
  return kPresets;
}

inline std::optional<PolicyConfig> find_preset(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name == name) return p.policy;
  }
  return std::nullopt;
}

// Presets carry block indices for full-size models. Drops indices that do
// not exist in a model with `layers` layer pairs; each adjustment is
// appended to `notes`.
inline PolicyConfig fit_to_layers(PolicyConfig policy, std::size_t layers,
                                  std::vector<std::string>* notes) {
  const int nl = static_cast<int>(layers);
  if (auto* pab = std::get_if<PabConfig>(&policy)) {
    std::vector<int> kept;
    for (int b : pab->mlp.blocks) {
      if (b < nl) kept.push_back(b);
    }
    if (kept.size() != pab->mlp.blocks.size() && notes != nullptr) {
      notes->push_back("mlp blocks clipped to " + std::to_string(kept.size()) +
                       " of " + std::to_string(pab->mlp.blocks.size()) +
                       " (model has " + std::to_string(nl) + " layers)");
    }
    pab->mlp.blocks = std::move(kept);
  } else if (auto* dd = std::get_if<DeltaDitConfig>(&policy)) {
    if (dd->block_hi >= nl) {
      if (notes != nullptr) {
        notes->push_back("deltadit block_hi clipped from " +
                         std::to_string(dd->block_hi) + " to " +
                         std::to_string(nl - 1));
      }
      dd->block_hi = nl - 1;
    }
  }
  return policy;
}

}  // namespace pab

#endif  // PAB_POLICY_HPP_
