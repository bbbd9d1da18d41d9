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

// Redundancy scans over recorded component outputs, analytic FLOP
// accounting and wall-time breakdowns.

#ifndef PAB_PROFILER_HPP_
#define PAB_PROFILER_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pab/decision.hpp"
#include "pab/engine.hpp"
#include "pab/error.hpp"
#include "pab/model_config.hpp"
#include "pab/numerics.hpp"
#include "pab/parallel.hpp"

namespace pab {

enum class DiffMetric { kMse, kRelativeL2, kOneMinusCosine };

inline const char* diff_metric_name(DiffMetric m) {
  switch (m) {
    case DiffMetric::kMse: return "mse";
    case DiffMetric::kRelativeL2: return "relative_l2";
    case DiffMetric::kOneMinusCosine: return "one_minus_cosine";
  }
  return "?";
}

inline std::optional<DiffMetric> parse_diff_metric(std::string_view s) {
  if (s == "mse") return DiffMetric::kMse;
  if (s == "relative_l2") return DiffMetric::kRelativeL2;
  if (s == "one_minus_cosine") return DiffMetric::kOneMinusCosine;
  return std::nullopt;
}

// Accumulates in double regardless of the snapshot type.
template <typename T>
double diff_metric(std::span<const T> a, std::span<const T> b, DiffMetric m) {
  if (a.size() != b.size()) throw ShapeError("diff_metric: size mismatch");
  if (a.empty()) throw MetricError("diff_metric: empty input");
  double sq = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = static_cast<double>(a[i]);
    const double y = static_cast<double>(b[i]);
    const double d = x - y;
    sq += d * d;
    aa += x * x;
    bb += y * y;
    ab += x * y;
  }
  switch (m) {
    case DiffMetric::kMse:
      return sq / static_cast<double>(a.size());
    case DiffMetric::kRelativeL2:
      if (bb == 0.0) throw MetricError("relative_l2 undefined for zero-norm reference");
      return std::sqrt(sq) / std::sqrt(bb);
    case DiffMetric::kOneMinusCosine:
      if (aa == 0.0 || bb == 0.0) {
        throw MetricError("cosine undefined for a zero-norm operand");
      }
      return 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb));
  }
  return 0.0;
}

template <typename T>
double diff_metric(const std::vector<T>& a, const std::vector<T>& b, DiffMetric m) {
  return diff_metric(std::span<const T>(a), std::span<const T>(b), m);
}

// ---------------------------------------------------------------------------
// Redundancy scan
// ---------------------------------------------------------------------------

inline constexpr int kAverageLayer = -1;

struct RedundancyEntry {
  std::size_t step = 0;   // compares step with step - 1
  double timestep = 0.0;
  std::string label;      // site name, or "mlp" for the pooled MLP average
  int layer = 0;          // kAverageLayer for across-layer averages
  double value = 0.0;
};

struct RedundancyReport {
  DiffMetric metric = DiffMetric::kMse;
  std::vector<RedundancyEntry> entries;

  // Across-layer average for one label at one step, if present.
  std::optional<double> average(std::size_t step, std::string_view label) const {
    for (const auto& e : entries) {
      if (e.step == step && e.layer == kAverageLayer && e.label == label) return e.value;
    }
    return std::nullopt;
  }
};

// Differences between consecutive steps for every (site, layer), then the
// across-layer average per site and a pooled average over both MLP sites.
inline RedundancyReport redundancy_scan(const ComponentTrace& trace, DiffMetric metric) {
  if (!trace.snapshots) {
    throw ValidationError("redundancy scan needs a trace recorded with snapshots");
  }
  for (const auto& r : trace.records) {
    if (r.decision.reuse) {
      throw ValidationError("redundancy scan rejects traces containing reuse records");
    }
  }
  const ModelConfig& cfg = trace.cfg;
  const std::vector<Site> sites = cfg.sites();
  // index[step][layer][site] -> record
  std::map<std::size_t, std::map<std::pair<std::size_t, Site>, const TraceRecord*>> by_step;
  std::map<std::size_t, double> timestep_of;
  for (const auto& r : trace.records) {
    by_step[r.step][{r.layer, r.site}] = &r;
    timestep_of[r.step] = r.timestep;
  }

  RedundancyReport rep;
  rep.metric = metric;
  for (const auto& [step, cur] : by_step) {
    if (step == 0) continue;
    auto prev_it = by_step.find(step - 1);
    if (prev_it == by_step.end()) continue;
    const auto& prev = prev_it->second;
    double mlp_sum = 0.0;
    std::size_t mlp_n = 0;
    for (Site s : sites) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t l = 0; l < cfg.layers; ++l) {
        auto a = cur.find({l, s});
        auto b = prev.find({l, s});
        if (a == cur.end() || b == prev.end()) {
          throw ValidationError("trace is missing a site record");
        }
        const double v = diff_metric(a->second->snapshot, b->second->snapshot, metric);
        rep.entries.push_back({step, timestep_of[step], site_name(s), static_cast<int>(l), v});
        sum += v;
        ++n;
      }
      const double avg = sum / static_cast<double>(n);
      rep.entries.push_back({step, timestep_of[step], site_name(s), kAverageLayer, avg});
      if (kind_of(s) == ComponentKind::kMlp) {
        mlp_sum += sum;
        mlp_n += n;
      }
    }
    rep.entries.push_back({step, timestep_of[step], "mlp", kAverageLayer,
                           mlp_sum / static_cast<double>(mlp_n)});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Analytic FLOPs
// ---------------------------------------------------------------------------

// How a site is executed at one step.
enum class SiteExec { kCompute, kReplayScores, kSkip };

inline SiteExec site_exec(const DecisionTable& table, std::size_t step,
                          std::size_t layer, Site site, BroadcastObject mode) {
  if (table.block(step, layer).reuse) return SiteExec::kSkip;
  const ComponentKind k = kind_of(site);
  if (!table.at(step, layer, k).reuse) return SiteExec::kCompute;
  if (k != ComponentKind::kMlp && mode == BroadcastObject::kScores) {
    return SiteExec::kReplayScores;
  }
  return SiteExec::kSkip;
}

// Per batch element. Matmuls are 2 * m * n * k; norm, modulate, softmax
// (plus score scaling) and GELU use the per-element constants.
inline FlopCounter site_flops(const ModelConfig& cfg, Site site, SiteExec exec) {
  FlopCounter c;
  if (exec == SiteExec::kSkip) return c;
  const std::uint64_t T = cfg.frames, S = cfg.spatial_tokens, D = cfg.hidden;
  const std::uint64_t M = cfg.text_tokens, H = cfg.heads, F = cfg.mlp_hidden();
  const std::uint64_t R = T * S;
  auto add = [&](FlopCategory cat, std::uint64_t n) { c.counts[static_cast<int>(cat)] += n; };
  const std::uint64_t norm = kLayerNormFlopsPerElement * R * D;
  const std::uint64_t mod = 2 * D * 2 * D + kModulateFlopsPerElement * R * D;
  const std::uint64_t softmax_per = kSoftmaxFlopsPerElement + kScoreScaleFlopsPerElement;
  const bool replay = exec == SiteExec::kReplayScores;
  switch (site) {
    case Site::kSpatialAttn:
    case Site::kTemporalAttn: {
      const std::uint64_t n = site == Site::kSpatialAttn ? S : T;  // group length
      add(FlopCategory::kNormModulate, norm + mod);
      if (replay) {
        add(FlopCategory::kQkvProj, 2 * R * D * D);
      } else {
        add(FlopCategory::kQkvProj, 3 * 2 * R * D * D);
        add(FlopCategory::kScoreMatmul, 2 * R * n * D);
        add(FlopCategory::kNormModulate, softmax_per * R * n * H);
      }
      add(FlopCategory::kValueMatmul, 2 * R * n * D);
      add(FlopCategory::kOutProj, 2 * R * D * D);
      break;
    }
    case Site::kSpatialCross:
    case Site::kTemporalCross:
      if (replay) {
        add(FlopCategory::kQkvProj, 2 * M * D * D);
      } else {
        add(FlopCategory::kNormModulate, norm);
        add(FlopCategory::kQkvProj, 2 * R * D * D + 2 * 2 * M * D * D);
        add(FlopCategory::kScoreMatmul, 2 * R * M * D);
        add(FlopCategory::kNormModulate, softmax_per * R * M * H);
      }
      add(FlopCategory::kValueMatmul, 2 * R * M * D);
      add(FlopCategory::kOutProj, 2 * R * D * D);
      break;
    case Site::kSpatialMlp:
    case Site::kTemporalMlp:
      add(FlopCategory::kNormModulate, norm + mod + kGeluFlopsPerElement * R * F);
      add(FlopCategory::kMlp, 2 * 2 * R * D * F);
      break;
  }
  return c;
}

struct FlopReport {
  std::size_t batch = 1;
  BroadcastObject mode = BroadcastObject::kOutputs;
  // [kind][category]
  std::array<FlopCounter, kNumKinds> baseline{};
  std::array<FlopCounter, kNumKinds> policy{};

  std::uint64_t baseline_total() const {
    std::uint64_t t = 0;
    for (const auto& c : baseline) t += c.total();
    return t;
  }
  std::uint64_t policy_total() const {
    std::uint64_t t = 0;
    for (const auto& c : policy) t += c.total();
    return t;
  }
  double ratio() const {
    const auto b = baseline_total();
    return b == 0 ? 1.0 : static_cast<double>(policy_total()) / static_cast<double>(b);
  }
};

inline FlopReport flop_report(const ModelConfig& cfg, const DecisionTable& table,
                              BroadcastObject mode, std::size_t batch = 1) {
  if (table.layers() != cfg.layers) throw ShapeError("flop_report: table/config mismatch");
  FlopReport rep;
  rep.batch = batch;
  rep.mode = mode;
  for (std::size_t s = 0; s < table.steps(); ++s) {
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      for (Site site : cfg.sites()) {
        const int k = static_cast<int>(kind_of(site));
        FlopCounter full = site_flops(cfg, site, SiteExec::kCompute);
        FlopCounter used = site_flops(cfg, site, site_exec(table, s, l, site, mode));
        for (int c = 0; c < kNumFlopCategories; ++c) {
          rep.baseline[k].counts[c] += full.counts[c] * batch;
          rep.policy[k].counts[c] += used.counts[c] * batch;
        }
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Runtime breakdown
// ---------------------------------------------------------------------------

inline constexpr std::array<const char*, 4> kBreakdownCategories = {
    "attention", "attention_related", "mlp", "other"};

struct BreakdownReport {
  std::array<double, 4> seconds{};
  std::array<double, 4> percent{};

  double total() const { return seconds[0] + seconds[1] + seconds[2] + seconds[3]; }
};

// "other" is whatever step wall time is not inside a site's attention,
// attention-related or MLP work (embeddings, head, re-shards, residual adds).
inline BreakdownReport runtime_breakdown(const ComponentTrace& trace) {
  BreakdownReport rep;
  for (const auto& r : trace.records) {
    rep.seconds[0] += r.attn_seconds;
    rep.seconds[1] += r.related_seconds;
    rep.seconds[2] += r.mlp_seconds;
  }
  double steps_total = 0.0;
  for (const auto& s : trace.steps) steps_total += s.total_seconds;
  rep.seconds[3] = std::max(0.0, steps_total - rep.seconds[0] - rep.seconds[1] - rep.seconds[2]);
  const double total = rep.total();
  if (total <= 0.0) {
    rep.percent[3] = 100.0;  // empty trace
    return rep;
  }
  for (int i = 0; i < 4; ++i) rep.percent[i] = 100.0 * rep.seconds[i] / total;
  return rep;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_redundancy_csv(std::ostream& os, const RedundancyReport& rep) {
  os << "step,timestep,kind,layer,metric,value\n";
  for (const auto& e : rep.entries) {
    os << e.step << ',' << format_double(e.timestep) << ',' << e.label << ',';
    if (e.layer == kAverageLayer) {
      os << "avg";
    } else {
      os << e.layer;
    }
    os << ',' << diff_metric_name(rep.metric) << ',' << format_double(e.value) << '\n';
  }
}

inline void write_flops_csv(std::ostream& os, const FlopReport& rep) {
  os << "# flops = 2 * multiply-accumulates; per element: layer_norm "
     << kLayerNormFlopsPerElement << ", modulate " << kModulateFlopsPerElement
     << ", softmax " << kSoftmaxFlopsPerElement << " + scale "
     << kScoreScaleFlopsPerElement << ", gelu " << kGeluFlopsPerElement << "\n";
  os << "kind,category,baseline,policy,ratio\n";
  auto ratio = [](std::uint64_t b, std::uint64_t p) {
    return b == 0 ? 1.0 : static_cast<double>(p) / static_cast<double>(b);
  };
  for (ComponentKind k : kAllKinds) {
    const int ki = static_cast<int>(k);
    for (int c = 0; c < kNumFlopCategories; ++c) {
      const auto b = rep.baseline[ki].counts[c];
      const auto p = rep.policy[ki].counts[c];
      os << kind_name(k) << ',' << flop_category_name(static_cast<FlopCategory>(c))
         << ',' << b << ',' << p << ',' << format_double(ratio(b, p)) << '\n';
    }
  }
  os << "all,total," << rep.baseline_total() << ',' << rep.policy_total() << ','
     << format_double(rep.ratio()) << '\n';
}

inline void write_breakdown_csv(std::ostream& os, const BreakdownReport& rep) {
  os << "category,seconds,percent\n";
  for (int i = 0; i < 4; ++i) {
    os << kBreakdownCategories[i] << ',' << format_double(rep.seconds[i]) << ','
       << format_double(rep.percent[i]) << '\n';
  }
}

inline void write_comm_csv(std::ostream& os, const CommReport& rep) {
  os << "step,layer,method,elements,bytes,communicating\n";
  for (const auto& e : rep.entries) {
    os << e.step << ',' << e.layer << ',' << method_name(e.method) << ','
       << format_double(e.elements) << ',' << format_double(e.bytes) << ','
       << (e.communicating ? 1 : 0) << '\n';
  }
}

}  // namespace pab

#endif  // PAB_PROFILER_HPP_
