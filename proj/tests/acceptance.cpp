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

// Prints one PASS/FAIL line per acceptance criterion and exits nonzero if
// any of them fails.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pab/commands.hpp"

namespace fs = std::filesystem;
using pab::ComponentKind;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// The desk configuration: L=4, D=64, T=8, S=64, M=16.
pab::ModelConfig desk() { return pab::ModelConfig{}; }

const pab::TimestepSchedule& thirty() {
  static const auto s = pab::make_schedule(30, pab::ScheduleScheme::kLinear);
  return s;
}

pab::PolicyConfig fitted(const std::string& name, std::size_t layers) {
  return pab::fit_to_layers(*pab::find_preset(name), layers, nullptr);
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "failed: ";
      else detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

int run_engine(const std::string& args) {
  const std::string cmd = std::string(PAB_ENGINE_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_config(const fs::path& path, const pab::RunConfig& c) {
  std::ofstream os(path);
  os << pab::config_to_json(c).dump(2) << "\n";
  return path.string();
}

// ---------------------------------------------------------------------------

void identity_gate(Outcome& o) {
  const fs::path dir = fs::temp_directory_path() / "pab_acceptance_c1";
  fs::remove_all(dir);
  fs::create_directories(dir);
  pab::RunConfig none;
  none.out = (dir / "none").string();
  pab::RunConfig ones = none;
  pab::PabConfig p;
  p.spatial_range = p.temporal_range = p.cross_range = 1;
  ones.policy = p;
  ones.out = (dir / "ones").string();

  const auto t0 = Clock::now();
  const int a = run_engine("generate --config " + write_config(dir / "none.json", none));
  const int b = run_engine("generate --config " + write_config(dir / "ones.json", ones));
  const double secs = seconds_since(t0);
  o.require(a == 0 && b == 0, "generate exited nonzero");
  const std::string da = slurp(dir / "none" / "latent.pabt");
  const std::string db = slurp(dir / "ones" / "latent.pabt");
  o.require(!da.empty() && da == db, "latent dumps differ");
  o.require(secs < 60.0, "runtime over 60 s");
  o.detail << (o.pass ? "" : " | ") << da.size() << " bytes identical, both runs "
           << pab::fixed(secs, 2) << " s";
  fs::remove_all(dir);
}

void schedule_oracle(Outcome& o) {
  const auto t0 = Clock::now();
  std::size_t bad = 0;
  oracle::Gen g(31337);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = g.integer(1, 60);
    const std::size_t layers = g.integer(1, 6);
    const auto sched = pab::make_schedule(
        n, g.coin() ? pab::ScheduleScheme::kLinear : pab::ScheduleScheme::kDdimLinearBeta);
    const auto cfg = oracle::random_pab(g, layers);
    bad += oracle::mismatches(pab::build_schedule(cfg, sched, layers),
                              oracle::walk_pab(cfg, sched.timesteps, layers));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = g.integer(1, 60);
    const std::size_t layers = g.integer(1, 6);
    pab::TGateConfig c{g.integer(1, int(n)), g.integer(1, 5), g.integer(0, 6)};
    bad += oracle::mismatches(
        pab::build_schedule(c, pab::make_schedule(n, pab::ScheduleScheme::kLinear), layers),
        oracle::walk_tgate(c, n, layers));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = g.integer(1, 60);
    const int layers = g.integer(1, 6);
    const int lo = g.integer(0, layers - 1);
    pab::DeltaDitConfig c{g.integer(1, int(n)), g.integer(1, 5), lo, g.integer(lo, layers - 1)};
    bad += oracle::mismatches(
        pab::build_schedule(c, pab::make_schedule(n, pab::ScheduleScheme::kLinear), layers),
        oracle::walk_deltadit(c, n, layers));
  }
  const double secs = seconds_since(t0);
  o.require(bad == 0, std::to_string(bad) + " mismatched cells");
  o.require(secs < 5.0, "over 5 s");
  o.detail << " 300 configs, " << bad << " mismatches, " << pab::fixed(secs, 3) << " s";
}

std::set<std::size_t> compute_steps(const pab::DecisionTable& t, ComponentKind k) {
  std::set<std::size_t> out;
  for (std::size_t s = 0; s < t.steps(); ++s) {
    bool all = true;
    for (std::size_t l = 0; l < t.layers(); ++l) all = all && t.computes(s, l, k);
    if (all) out.insert(s);
  }
  return out;
}

std::set<std::size_t> outside_plus(std::set<std::size_t> inside) {
  for (std::size_t s : {0, 1, 2}) inside.insert(s);
  for (std::size_t s = 17; s < 30; ++s) inside.insert(s);
  return inside;
}

void pab246_sets(Outcome& o) {
  const auto t = pab::build_schedule(fitted("opensora-pab246", 4), thirty(), 4);
  o.require(compute_steps(t, ComponentKind::kSpatialAttn) ==
                outside_plus({3, 5, 7, 9, 11, 13, 15}),
            "spatial set");
  o.require(compute_steps(t, ComponentKind::kTemporalAttn) == outside_plus({3, 7, 11, 15}),
            "temporal set");
  o.require(compute_steps(t, ComponentKind::kCrossAttn) == outside_plus({3, 9, 15}),
            "cross set");
  o.detail << " in-window computes spatial {3,5,..,15} temporal {3,7,11,15} cross {3,9,15}";
}

bool flops_exact(const pab::PolicyConfig& policy, pab::BroadcastObject mode) {
  pab::ModelConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 8;
  cfg.heads = 4;
  cfg.frames = 2;
  cfg.spatial_tokens = 4;
  cfg.text_tokens = 2;
  const auto params = pab::init_model<float>(cfg, 4);
  pab::SamplerOptions opt;
  opt.guidance = false;
  opt.mode = mode;
  const auto res = pab::sample(params, pab::make_schedule(8, pab::ScheduleScheme::kLinear),
                               policy, 4, opt);
  const auto rep = pab::flop_report(cfg, res.table, mode, 1);
  std::array<pab::FlopCounter, pab::kNumKinds> got{};
  for (const auto& r : res.trace.records) got[static_cast<int>(r.kind)] += r.flops;
  for (int k = 0; k < pab::kNumKinds; ++k) {
    for (int c = 0; c < pab::kNumFlopCategories; ++c) {
      if (rep.policy[k].counts[c] != got[k].counts[c]) return false;
    }
  }
  return true;
}

void flop_exactness(Outcome& o) {
  pab::PabConfig busy;
  busy.spatial_range = 2;
  busy.temporal_range = 3;
  busy.cross_range = 4;
  busy.window_hi = 1000;
  busy.window_lo = 0;
  busy.mlp = {{800, 400}, {0}, 2};
  o.require(flops_exact(pab::NoPolicy{}, pab::BroadcastObject::kOutputs), "all-compute");
  o.require(flops_exact(busy, pab::BroadcastObject::kOutputs), "outputs mode");
  o.require(flops_exact(busy, pab::BroadcastObject::kScores), "scores mode");
  const auto cfg = desk();
  const auto table = pab::build_schedule(fitted("opensora-pab246", cfg.layers), thirty(),
                                         cfg.layers);
  const auto out = pab::flop_report(cfg, table, pab::BroadcastObject::kOutputs, 2);
  const auto sc = pab::flop_report(cfg, table, pab::BroadcastObject::kScores, 2);
  o.require(out.policy_total() < sc.policy_total(), "outputs < scores");
  o.require(sc.policy_total() < sc.baseline_total(), "scores < baseline");
  o.detail << " exact on 3 tables; outputs " << out.ratio() << " < scores " << sc.ratio()
           << " < baseline 1";
}

void comm_ratios(Outcome& o) {
  const auto cfg = desk();
  pab::DecisionTable none(30, cfg.layers), seventeen(30, cfg.layers);
  for (std::size_t s = 17; s < 30; ++s) {
    seventeen.set_all_layers(s, ComponentKind::kTemporalAttn, pab::Decision::reuse_from(16));
  }
  auto total = [&](pab::CommMethod m, const pab::DecisionTable& t) {
    return pab::comm_volume_model(m, cfg, thirty(), t, 4, 2, 4).total_elements();
  };
  const double mg = total(pab::CommMethod::kMegatronSp, none);
  const double ul = total(pab::CommMethod::kDsUlysses, none);
  const double dsp = total(pab::CommMethod::kDsp, none);
  o.require(mg / dsp == 8.0 && ul / dsp == 2.0, "ratios not 8:2:1");
  o.require(std::fabs(184.63 / 23.08 - mg / dsp) <= 1e-3 * 8.0 &&
                std::fabs(46.16 / 23.08 - ul / dsp) <= 1e-3 * 2.0,
            "reference ratio outside 0.1%");
  double worst = 0;
  for (auto m : {pab::CommMethod::kMegatronSp, pab::CommMethod::kDsUlysses,
                 pab::CommMethod::kDsp}) {
    worst = std::max(worst, std::fabs(total(m, seventeen) / total(m, none) - 17.0 / 30.0));
  }
  o.require(worst < 1e-12, "factor differs from 17/30");
  o.require(std::fabs(104.62 / 184.63 - 17.0 / 30.0) < 1e-3, "reference factor");
  // Any PAB table scales every method alike.
  const auto t = pab::build_schedule(fitted("opensora-pab246", cfg.layers), thirty(), cfg.layers);
  const double f0 = total(pab::CommMethod::kDsp, t) / dsp;
  o.require(total(pab::CommMethod::kMegatronSp, t) / mg == f0 &&
                total(pab::CommMethod::kDsUlysses, t) / ul == f0,
            "pab246 factor differs across methods");
  o.detail << " " << pab::fixed(mg / dsp, 3) << " : " << pab::fixed(ul / dsp, 3)
           << " : 1.000, 17-of-30 factor " << pab::fixed(17.0 / 30.0, 4) << ", pab246 factor "
           << pab::fixed(f0, 4);
}

template <typename Real>
double max_rel_diff(const pab::Latent<Real>& a, const pab::Latent<Real>& b) {
  const auto x = a.flatten(), y = b.flatten();
  double scale = 0, worst = 0;
  for (auto v : y) scale = std::max(scale, std::fabs(double(v)));
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, std::fabs(double(x[i]) - double(y[i])));
  }
  return worst / std::max(scale, 1e-300);
}

template <typename Real>
double parallel_worst(Outcome& o, double tol) {
  const auto cfg = desk();
  const auto params = pab::init_model<Real>(cfg, 11);
  double worst = 0;
  for (const char* name : {"none", "opensora-pab246", "tgate-default", "deltadit-default"}) {
    const auto policy = fitted(name, cfg.layers);
    pab::SamplerOptions opt;
    opt.trace = false;
    const auto serial = pab::sample(params, thirty(), policy, 11, opt);
    const bool pab = std::holds_alternative<pab::PabConfig>(policy);
    for (std::size_t w : {2u, 4u}) {
      const auto method = pab ? pab::CommMethod::kBroadcastSp : pab::CommMethod::kDsp;
      const auto par = pab::run_parallel(params, thirty(), policy, w, method, 11, opt);
      const double d = max_rel_diff(par.latent, serial.latent);
      worst = std::max(worst, d);
      o.require(d <= tol, std::string(name) + " W=" + std::to_string(w) + " diff " +
                              pab::format_double(d));
    }
  }
  return worst;
}

void parallel_equivalence(Outcome& o) {
  const double w32 = parallel_worst<float>(o, 1e-5);
  const double w64 = parallel_worst<double>(o, 1e-12);
  const auto cfg = desk();
  const auto params = pab::init_model<float>(cfg, 11);
  std::size_t compared = 0;
  for (auto method : {pab::CommMethod::kDsp, pab::CommMethod::kBroadcastSp}) {
    for (const char* name : {"none", "opensora-pab246"}) {
      const auto policy = fitted(name, cfg.layers);
      if (method == pab::CommMethod::kBroadcastSp && !std::holds_alternative<pab::PabConfig>(policy)) {
        continue;
      }
      for (std::size_t w : {2u, 4u}) {
        pab::SamplerOptions opt;
        opt.trace = false;
        const auto res = pab::run_parallel(params, thirty(), policy, w, method, 11, opt);
        const auto model = pab::comm_volume_model(method, cfg, thirty(), res.table, w, 2, 4);
        o.require(res.comm.entries == model.entries,
                  std::string("ledger differs for ") + pab::method_name(method) + " " + name);
        o.require(res.comm.total_elements() == model.total_elements(), "ledger total");
        ++compared;
      }
    }
  }
  o.detail << " max rel diff f32 " << pab::format_double(w32) << ", f64 "
           << pab::format_double(w64) << "; " << compared << " ledgers equal the model";
}

void reshard_count(Outcome& o) {
  const auto cfg = desk();
  const auto params = pab::init_model<float>(cfg, 11);
  const auto policy = fitted("opensora-pab246", cfg.layers);
  pab::SamplerOptions opt;
  opt.trace = false;
  const auto res =
      pab::run_parallel(params, thirty(), policy, 4, pab::CommMethod::kBroadcastSp, 11, opt);
  std::size_t computing = 0;
  for (std::size_t s = 0; s < res.table.steps(); ++s) {
    computing += res.table.computes(s, 0, ComponentKind::kTemporalAttn);
  }
  for (const auto& e : res.comm.entries) {
    const bool temporal = res.table.computes(e.step, e.layer, ComponentKind::kTemporalAttn);
    o.require(temporal || e.elements == 0.0, "exchange at a reuse step");
  }
  o.require(res.comm.reshard_events == 2 * cfg.layers * computing, "reshard count");
  o.detail << " " << res.comm.reshard_events << " events = 2 x " << cfg.layers << " x "
           << computing;
}

pab::PabConfig uniform(int r) {
  pab::PabConfig p;
  p.spatial_range = p.temporal_range = p.cross_range = r;
  return p;
}

void degradation(Outcome& o) {
  const auto cfg = desk();
  const std::vector<int> ranges = {1, 2, 4, 8};
  std::vector<double> mse(ranges.size(), 0.0);
  double psnr246 = 0, psnr579 = 0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    const std::uint64_t s = 11 + static_cast<std::uint64_t>(seed);
    const auto params = pab::init_model<float>(cfg, s);
    pab::SamplerOptions opt;
    opt.trace = false;
    const auto ref = pab::sample(params, thirty(), pab::NoPolicy{}, s, opt).latent;
    const auto ref_flat = ref.flatten();
    for (std::size_t i = 0; i < ranges.size(); ++i) {
      const auto x = pab::sample(params, thirty(), uniform(ranges[i]), s, opt).latent;
      mse[i] += pab::diff_metric(x.flatten(), ref_flat, pab::DiffMetric::kMse) / seeds;
    }
    const auto fa = pab::frames_of(ref);
    const double peak = pab::empirical_range(fa);
    auto psnr_of = [&](const char* name) {
      const auto x = pab::sample(params, thirty(), fitted(name, cfg.layers), s, opt).latent;
      return pab::psnr(fa, pab::frames_of(x), peak).mean;
    };
    psnr246 += psnr_of("opensora-pab246") / seeds;
    psnr579 += psnr_of("opensora-pab579") / seeds;
  }
  for (std::size_t i = 1; i < mse.size(); ++i) {
    o.require(mse[i] >= mse[i - 1], "mse decreases at range " + std::to_string(ranges[i]));
  }
  o.require(psnr246 >= psnr579, "pab246 psnr below pab579");
  o.detail << " mse";
  for (std::size_t i = 0; i < mse.size(); ++i) {
    o.detail << " r" << ranges[i] << "=" << pab::format_double(mse[i]);
  }
  o.detail << "; psnr pab246 " << pab::fixed(psnr246, 2) << " >= pab579 "
           << pab::fixed(psnr579, 2) << " dB";
}

void metric_correctness(Outcome& o) {
  oracle::Gen g(2024);
  auto random_frames = [&](std::size_t n, std::size_t h, std::size_t w) {
    pab::FrameSet f(n, h, w);
    for (auto& v : f.data) v = g.real(-1.0, 1.0);
    return f;
  };
  const auto a = random_frames(2, 16, 16);
  const auto pi = pab::psnr(a, a, 2.0).mean;
  o.require(std::isinf(pi) && pi > 0, "psnr of identical frames is not +inf");
  auto b = a;
  for (auto& v : b.data) v += 2.0;  // MSE = R^2 with R = 2
  o.require(std::fabs(pab::psnr(a, b, 2.0).mean) < 1e-12, "psnr at MSE=R^2 is not 0 dB");
  o.require(std::fabs(pab::ssim(a, a, pab::SsimParams::for_range(2.0)).mean - 1.0) <= 1e-9,
            "ssim of identical frames");
  double worst = 0;
  for (int pair = 0; pair < 20; ++pair) {
    const std::size_t h = g.integer(8, 24), w = g.integer(8, 24), n = g.integer(2, 8);
    const auto x = random_frames(g.integer(1, 3), h, w);
    auto y = x;
    for (auto& v : y.data) v += g.real(-0.5, 0.5);
    const auto prm = pab::SsimParams::for_range(2.0, n);
    worst = std::max(worst,
                     std::fabs(pab::ssim(x, y, prm).mean - oracle::ssim(x, y, prm.c1, prm.c2, n)));
  }
  o.require(worst <= 1e-8, "ssim differs from the window oracle");
  o.detail << " 20 ssim pairs, max deviation " << pab::format_double(worst);
}

void ablation(Outcome& o) {
  pab::RunConfig c;
  c.preset = "opensora-pab246";
  c.policy = fitted(c.preset, c.model.layers);
  const auto& base = std::get<pab::PabConfig>(c.policy);
  const auto kinds = pab::broadcast_kinds(base);
  const auto rows = pab::run_ablation(c, kinds);
  o.require(rows.size() == kinds.size() + 2, "row count");
  const double full = rows[1].flops_ratio;
  o.detail << " full " << pab::fixed(full, 4);
  for (std::size_t i = 2; i < rows.size(); ++i) {
    o.require(rows[i].flops_ratio > full && rows[i].flops_ratio < 1.0, rows[i].label);
    o.detail << ", " << rows[i].label << " " << pab::fixed(rows[i].flops_ratio, 4);
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"identity gate", identity_gate},
      {"schedule oracle", schedule_oracle},
      {"pab246 enumeration", pab246_sets},
      {"flop exactness", flop_exactness},
      {"communication ratios", comm_ratios},
      {"parallel equivalence", parallel_equivalence},
      {"communication elimination", reshard_count},
      {"degradation monotonicity", degradation},
      {"metric correctness", metric_correctness},
      {"ablation structure", ablation},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first
              << " -" << o.detail.str() << " [" << pab::fixed(seconds_since(t0), 1) << " s]"
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
