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

// Subcommand implementations behind tools/pab_engine. Each returns a
// process exit code; failures print one JSON object to `err`.

#ifndef PAB_COMMANDS_HPP_
#define PAB_COMMANDS_HPP_

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <exception>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pab/config.hpp"
#include "pab/diffusion.hpp"
#include "pab/error.hpp"
#include "pab/io.hpp"
#include "pab/model.hpp"
#include "pab/parallel.hpp"
#include "pab/policy.hpp"
#include "pab/profiler.hpp"
#include "pab/quality.hpp"

namespace pab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitArtifact = 3;

inline int exit_code_for(const std::string& kind) {
  if (kind == "missing-artifact" || kind == "shape-mismatch" ||
      kind == "corrupt-artifact" || kind == "io") {
    return kExitArtifact;
  }
  if (kind == "internal") return kExitInternal;
  return kExitValidation;
}

inline void print_error(std::ostream& err, const std::string& kind, const std::string& msg) {
  Json j;
  j["error"] = {{"kind", kind}, {"message", msg}, {"exit_code", exit_code_for(kind)}};
  err << j.dump() << std::endl;
}

// Runs `fn`, mapping library errors to exit codes.
inline int guarded(std::ostream& err, const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    print_error(err, e.kind(), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    print_error(err, "internal", e.what());
    return kExitInternal;
  }
}

// Upper bound for concurrent runs in sweep commands.
inline std::size_t engine_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PAB_ENGINE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
  }
  return n;
}

// Calls fn(i) for i in [0, n) on at most engine_threads() threads. Results
// must be written to disjoint slots by the callee.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min(n, engine_threads());
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Overrides from flags
// ---------------------------------------------------------------------------

struct Overrides {
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> precision;
  std::optional<std::string> range_semantics;
  std::optional<std::string> broadcast_object;
  std::optional<std::size_t> workers;
  std::optional<std::string> method;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline void apply_overrides(RunConfig& c, const Overrides& o) {
  if (o.preset) {
    c.preset = *o.preset;
    c.notes.clear();
    c.policy = resolve_preset(c.preset, c.model.layers, &c.notes);
  }
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.precision) {
    auto p = parse_precision(*o.precision);
    if (!p) throw ValidationError("unknown precision '" + *o.precision + "'");
    c.precision = *p;
  }
  if (o.range_semantics) {
    auto s = parse_semantics(*o.range_semantics);
    if (!s) throw ValidationError("unknown range semantics '" + *o.range_semantics + "'");
    c.range_semantics = *s;
  }
  if (o.broadcast_object) {
    auto b = parse_broadcast_object(*o.broadcast_object);
    if (!b) throw ValidationError("unknown broadcast object '" + *o.broadcast_object + "'");
    c.broadcast_object = *b;
  }
  if (o.workers) c.workers = *o.workers;
  if (o.method) {
    auto m = parse_method(*o.method);
    if (!m) throw ValidationError("unknown method '" + *o.method + "'");
    c.method = *m;
  }
  apply_semantics(c.policy, c.range_semantics);
}

inline RunConfig load_run_config(const std::optional<std::string>& path, const Overrides& o) {
  RunConfig c;
  if (path) {
    c = load_config(*path);
  } else {
    c = config_from_json(Json::object());
  }
  apply_overrides(c, o);
  c.validate();
  return c;
}

inline SamplerOptions sampler_options(const RunConfig& c) {
  SamplerOptions opt;
  opt.guidance = c.guidance;
  opt.guidance_scale = c.guidance_scale;
  opt.mode = c.broadcast_object;
  opt.text = c.text;
  opt.workers = c.workers;
  opt.method = c.method;
  return opt;
}

inline std::size_t batch_of(const RunConfig& c) { return c.guidance ? 2 : 1; }

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

inline Json make_manifest(const RunConfig& c, const TimestepSchedule& sched,
                          std::uint64_t params_digest, std::uint64_t latent_digest,
                          const DecisionTable& table, const ComponentTrace& trace) {
  Json j;
  j["config"] = config_to_json(c);
  j["policy_type"] = policy_type_name(c.policy);
  j["preset"] = c.preset;
  j["seed"] = c.seed;
  j["schedule"] = {{"scheme", scheme_name(sched.scheme)},
                   {"steps", sched.size()},
                   {"timesteps", sched.timesteps}};
  j["noise"] = {{"beta_schedule", "linear"},
                {"beta_start", NoiseSchedule::kBetaStart},
                {"beta_end", NoiseSchedule::kBetaEnd},
                {"units", NoiseSchedule::kUnits},
                {"interpolation", "linear between integer timesteps"},
                {"sampler", "ddim eta=0"}};
  if (sched.scheme == ScheduleScheme::kLinear) {
    j["noise"]["scheduler_note"] =
        "linear timestep map stands in for the rectified-flow scheduler";
  }
  Json digests;
  digests["params"] = digest_hex(params_digest);
  digests["latent"] = digest_hex(latent_digest);
  std::vector<std::uint8_t> cells;
  for (std::size_t s = 0; s < table.steps(); ++s) {
    for (std::size_t l = 0; l < table.layers(); ++l) {
      cells.push_back(table.block(s, l).reuse);
      for (ComponentKind k : kAllKinds) cells.push_back(table.at(s, l, k).reuse);
    }
  }
  digests["decision_table"] = digest_hex(digest(std::span<const std::uint8_t>(cells)));
  j["digests"] = digests;
  j["records"] = trace.records.size();
  j["reuse_records"] = trace.reuse_records();
  j["instrumented_flops"] = trace.total_flops().total();
  j["defaults_filled"] = c.defaults_filled;
  j["notes"] = c.notes;
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + p.string(), "io");
  os << s;
}

inline void write_trace_csv(std::ostream& os, const ComponentTrace& trace) {
  os << "step,timestep,layer,site,kind,decision,source,block_reuse,flops\n";
  for (const auto& r : trace.records) {
    os << r.step << ',' << format_double(r.timestep) << ',' << r.layer << ','
       << site_name(r.site) << ',' << kind_name(r.kind) << ','
       << (r.decision.reuse ? "reuse" : "compute") << ',' << r.decision.source << ','
       << (r.block_reuse ? 1 : 0) << ',' << r.flops.total() << '\n';
  }
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

template <typename Real>
int generate_impl(const RunConfig& c, std::ostream& out) {
  const TimestepSchedule sched = c.schedule();
  const ModelParams<Real> params = init_model<Real>(c.model, c.seed);
  const SamplerOptions opt = sampler_options(c);
  const SampleResult<Real> res =
      run_parallel(params, sched, c.policy, c.workers, c.method, c.seed, opt);

  const std::filesystem::path dir(c.out);
  std::filesystem::create_directories(dir);
  const TensorDump dump = to_dump(res.latent);
  write_dump(dir / "latent.pabt", dump);
  const std::uint64_t latent_digest = digest(std::span<const float>(dump.values));
  const Json manifest =
      make_manifest(c, sched, params.digest(), latent_digest, res.table, res.trace);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  {
    std::ofstream os(dir / "trace.csv");
    write_trace_csv(os, res.trace);
  }
  if (c.workers > 1) {
    std::ofstream os(dir / "comm.csv");
    write_comm_csv(os, res.comm);
  }
  out << "latent " << (dir / "latent.pabt").string() << " digest "
      << digest_hex(latent_digest) << " reuse " << res.trace.reuse_records() << "/"
      << res.trace.records.size() << "\n";
  return kExitOk;
}

inline int cmd_generate(const RunConfig& c, std::ostream& out) {
  return c.precision == Precision::kF32 ? generate_impl<float>(c, out)
                                        : generate_impl<double>(c, out);
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

// `reference` is run A. Metrics: any of mse, psnr, ssim.
inline int cmd_compare(const std::filesystem::path& reference,
                       const std::filesystem::path& candidate,
                       const std::vector<std::string>& metrics,
                       const std::filesystem::path& out_dir, std::ostream& out) {
  const TensorDump a = read_dump(reference / "latent.pabt");
  const TensorDump b = read_dump(candidate / "latent.pabt");
  if (a.dims != b.dims) throw ShapeError("latent dumps differ in shape");
  const FrameSet fa = frames_of(from_dump<double>(a));
  const FrameSet fb = frames_of(from_dump<double>(b));
  const double peak = empirical_range(fa);
  std::vector<FrameMetricResult> results;
  for (const auto& m : metrics) {
    if (m == "mse") {
      results.push_back(mse_video(fa, fb));
    } else if (m == "psnr") {
      results.push_back(psnr(fa, fb, peak));
    } else if (m == "ssim") {
      results.push_back(ssim(fa, fb, SsimParams::for_range(peak)));
    } else {
      throw ValidationError("unknown metric '" + m + "'");
    }
  }
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "quality.csv");
    write_quality_csv(os, results);
  }
  for (const auto& r : results) out << r.metric << " mean " << format_double(r.mean) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

template <typename Real>
int profile_impl(const RunConfig& c, DiffMetric metric, std::ostream& out) {
  const TimestepSchedule sched = c.schedule();
  const ModelParams<Real> params = init_model<Real>(c.model, c.seed);
  SamplerOptions opt = sampler_options(c);
  opt.workers = 1;

  // Redundancy needs every output computed.
  SamplerOptions scan_opt = opt;
  scan_opt.snapshots = true;
  const auto scan = sample(params, sched, NoPolicy{}, c.seed, scan_opt);
  const RedundancyReport red = redundancy_scan(scan.trace, metric);

  const auto run = sample(params, sched, c.policy, c.seed, opt);
  const FlopReport flops = flop_report(c.model, run.table, c.broadcast_object, batch_of(c));
  const BreakdownReport br = runtime_breakdown(run.trace);

  const std::filesystem::path dir(c.out);
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "redundancy.csv");
    write_redundancy_csv(os, red);
  }
  {
    std::ofstream os(dir / "flops.csv");
    write_flops_csv(os, flops);
  }
  {
    std::ofstream os(dir / "breakdown.csv");
    write_breakdown_csv(os, br);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.6f", flops.ratio());
  out << "redundancy rows " << red.entries.size() << "\n";
  out << "flops ratio " << buf << "\n";
  for (int i = 0; i < 4; ++i) {
    std::snprintf(buf, sizeof buf, "%.2f", br.percent[i]);
    out << kBreakdownCategories[i] << " " << buf << "%\n";
  }
  return kExitOk;
}

inline int cmd_profile(const RunConfig& c, DiffMetric metric, std::ostream& out) {
  return c.precision == Precision::kF32 ? profile_impl<float>(c, metric, out)
                                        : profile_impl<double>(c, metric, out);
}

// ---------------------------------------------------------------------------
// simulate-parallel
// ---------------------------------------------------------------------------

struct ParallelSummary {
  std::size_t workers = 1;
  CommMethod method = CommMethod::kDsp;
  double baseline_elements = 0.0;  // no broadcasting
  double policy_elements = 0.0;    // under the configured policy
  double factor() const {
    return baseline_elements == 0.0 ? 0.0 : policy_elements / baseline_elements;
  }
};

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline int cmd_simulate_parallel(const RunConfig& c, const std::vector<std::size_t>& workers,
                                 const std::vector<CommMethod>& methods, std::ostream& out) {
  const TimestepSchedule sched = c.schedule();
  const DecisionTable none = build_schedule(NoPolicy{}, sched, c.model.layers);
  const DecisionTable table = build_schedule(c.policy, sched, c.model.layers);
  const std::size_t bpe = c.precision == Precision::kF32 ? 4 : 8;
  const std::filesystem::path dir(c.out);
  std::filesystem::create_directories(dir);

  std::size_t computing = 0;
  for (std::size_t s = 0; s < table.steps(); ++s) {
    for (std::size_t l = 0; l < table.layers(); ++l) {
      computing += temporal_exchange_needed(table, s, l, c.broadcast_object);
    }
  }
  const double fraction = static_cast<double>(computing) /
                          static_cast<double>(table.steps() * table.layers());

  Json summary;
  summary["policy_type"] = policy_type_name(c.policy);
  summary["preset"] = c.preset;
  summary["bytes_per_element"] = bpe;
  summary["batch"] = batch_of(c);
  summary["communicating_cells"] = computing;
  summary["total_cells"] = table.steps() * table.layers();
  summary["computing_fraction"] = fraction;
  Json runs = Json::array();

  for (std::size_t w : workers) {
    std::vector<ParallelSummary> rows;
    std::ofstream csv(dir / ("comm_w" + std::to_string(w) + ".csv"));
    csv << "step,layer,method,elements,bytes,communicating\n";
    for (CommMethod m : methods) {
      const bool pab = std::holds_alternative<PabConfig>(c.policy);
      if (m == CommMethod::kBroadcastSp && !pab) {
        throw ValidationError("broadcast_sp requires a pab policy");
      }
      const CommReport base = comm_volume_model(m, c.model, sched, none, w, batch_of(c), bpe,
                                                c.broadcast_object);
      const CommReport pol = comm_volume_model(m, c.model, sched, table, w, batch_of(c), bpe,
                                               c.broadcast_object);
      std::ostringstream part;
      write_comm_csv(part, pol);
      const std::string text = part.str();
      csv << text.substr(text.find('\n') + 1);
      rows.push_back({w, m, base.total_elements(), pol.total_elements()});
    }
    out << "W=" << w << "\n";
    for (const auto& r : rows) {
      out << "  " << method_name(r.method) << " baseline " << format_double(r.baseline_elements)
          << " policy " << format_double(r.policy_elements) << " factor "
          << fixed(r.factor(), 4) << "\n";
      runs.push_back({{"workers", w},
                      {"method", method_name(r.method)},
                      {"baseline_elements", r.baseline_elements},
                      {"policy_elements", r.policy_elements},
                      {"baseline_bytes", r.baseline_elements * double(bpe)},
                      {"policy_bytes", r.policy_elements * double(bpe)},
                      {"factor", r.factor()}});
    }
    // megatron : ulysses : dsp, normalized to dsp, without broadcasting.
    auto find = [&](CommMethod m) -> const ParallelSummary* {
      for (const auto& r : rows) {
        if (r.method == m) return &r;
      }
      return nullptr;
    };
    const auto* mg = find(CommMethod::kMegatronSp);
    const auto* ul = find(CommMethod::kDsUlysses);
    const auto* dsp = find(CommMethod::kDsp);
    if (mg && ul && dsp) {
      if (dsp->baseline_elements > 0.0) {
        out << "  ratio megatron_sp : ds_ulysses : dsp = "
            << fixed(mg->baseline_elements / dsp->baseline_elements, 3) << " : "
            << fixed(ul->baseline_elements / dsp->baseline_elements, 3) << " : "
            << fixed(1.0, 3) << "\n";
      } else {
        out << "  ratio megatron_sp : ds_ulysses : dsp = n/a (no communication)\n";
      }
    }
    if (const auto* bsp = find(CommMethod::kBroadcastSp)) {
      out << "  broadcast_sp factor " << fixed(bsp->factor(), 4)
          << " computing fraction " << fixed(fraction, 4) << " (" << computing << "/"
          << table.steps() * table.layers() << ")\n";
    }
  }
  summary["runs"] = runs;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string label;
  double flops_ratio = 1.0;
  double mse_vs_full = 0.0;
};

// Kinds that the base policy actually broadcasts; the default ablation set.
inline std::vector<ComponentKind> broadcast_kinds(const PabConfig& pab) {
  std::vector<ComponentKind> v;
  for (ComponentKind k : kAllKinds) {
    if (pab.broadcasts(k)) v.push_back(k);
  }
  return v;
}

template <typename Real>
std::vector<AblationRow> ablate_impl(const RunConfig& c, const std::vector<ComponentKind>& kinds) {
  const auto* base = std::get_if<PabConfig>(&c.policy);
  if (base == nullptr) throw ValidationError("ablation needs a pab base policy");
  for (ComponentKind k : kinds) {
    if (!base->broadcasts(k)) {
      throw ValidationError(std::string("kind '") + kind_name(k) +
                            "' is not broadcast by the base policy");
    }
  }
  const TimestepSchedule sched = c.schedule();
  const ModelParams<Real> params = init_model<Real>(c.model, c.seed);
  SamplerOptions opt = sampler_options(c);
  opt.workers = 1;
  opt.trace = false;

  // Row 0 is the policy-free baseline, row 1 full PAB, then one per kind.
  std::vector<PolicyConfig> policies = {NoPolicy{}, *base};
  std::vector<std::string> labels = {"none", "full"};
  for (ComponentKind k : kinds) {
    policies.push_back(without_kinds(*base, {k}));
    labels.push_back(std::string("w/o ") + kind_name(k));
  }
  std::vector<Latent<Real>> latents(policies.size());
  std::vector<double> ratios(policies.size());
  parallel_for(policies.size(), [&](std::size_t i) {
    const auto res = sample(params, sched, policies[i], c.seed, opt);
    ratios[i] = flop_report(c.model, res.table, c.broadcast_object, batch_of(c)).ratio();
    latents[i] = res.latent;
  });
  const auto full = latents[1].flatten();
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    rows.push_back({labels[i], ratios[i],
                    diff_metric(latents[i].flatten(), full, DiffMetric::kMse)});
  }
  return rows;
}

inline std::vector<AblationRow> run_ablation(const RunConfig& c,
                                             const std::vector<ComponentKind>& kinds) {
  return c.precision == Precision::kF32 ? ablate_impl<float>(c, kinds)
                                        : ablate_impl<double>(c, kinds);
}

inline std::vector<ComponentKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<ComponentKind> kinds;
  for (const auto& n : names) {
    auto k = parse_kind(n);
    if (!k) throw ValidationError("unknown component kind '" + n + "'");
    kinds.push_back(*k);
  }
  return kinds;
}

inline int cmd_ablate(const RunConfig& c, std::vector<ComponentKind> kinds, std::ostream& out) {
  const auto* base = std::get_if<PabConfig>(&c.policy);
  if (base == nullptr) throw ValidationError("ablation needs a pab base policy");
  if (kinds.empty()) kinds = broadcast_kinds(*base);
  const auto rows = run_ablation(c, kinds);
  const std::filesystem::path dir(c.out);
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "ablation.csv");
  csv << "variant,flops_ratio,mse_vs_full\n";
  for (const auto& r : rows) {
    csv << r.label << ',' << format_double(r.flops_ratio) << ',' << format_double(r.mse_vs_full)
        << '\n';
    out << r.label << " flops " << fixed(r.flops_ratio, 4) << " mse " << format_double(r.mse_vs_full)
        << "\n";
  }
  return kExitOk;
}

}  // namespace pab

#endif  // PAB_COMMANDS_HPP_
