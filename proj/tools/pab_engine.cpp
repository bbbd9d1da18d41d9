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

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pab/commands.hpp"

namespace {

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> precision;
  std::optional<std::string> range_semantics;
  std::optional<std::string> broadcast_object;
  std::optional<std::size_t> workers;
  std::optional<std::string> method;

  pab::Overrides overrides() const {
    pab::Overrides o;
    o.preset = preset;
    o.seed = seed;
    o.out = out;
    o.precision = precision;
    o.range_semantics = range_semantics;
    o.broadcast_object = broadcast_object;
    o.workers = workers;
    o.method = method;
    return o;
  }
};

void add_common(CLI::App* app, CommonFlags& f, bool with_parallel) {
  app->add_option("--config", f.config, "run config JSON");
  app->add_option("--preset", f.preset, "policy preset name");
  app->add_option("--seed", f.seed, "model and noise seed");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--precision", f.precision, "f32 or f64");
  app->add_option("--range-semantics", f.range_semantics, "period or reuse-count");
  app->add_option("--broadcast-object", f.broadcast_object, "outputs or scores");
  if (with_parallel) {
    app->add_option("--workers", f.workers, "logical sequence-parallel workers");
    app->add_option("--method", f.method, "megatron_sp, ds_ulysses, dsp or broadcast_sp");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pab_engine: broadcast caching for a toy video diffusion transformer"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  auto* gen = app.add_subcommand("generate", "sample a latent video and write artifacts");
  add_common(gen, gen_flags, true);

  std::string cmp_a, cmp_b, cmp_metrics = "mse,psnr,ssim", cmp_out;
  auto* cmp = app.add_subcommand("compare", "fidelity of run B against reference run A");
  cmp->add_option("run_a", cmp_a, "reference run directory")->required();
  cmp->add_option("run_b", cmp_b, "candidate run directory")->required();
  cmp->add_option("--metrics", cmp_metrics, "comma list of mse, psnr, ssim");
  cmp->add_option("--out", cmp_out, "directory for quality.csv (default: run B)");

  CommonFlags prof_flags;
  std::string prof_metric = "mse";
  auto* prof = app.add_subcommand("profile", "redundancy, flops and runtime breakdown");
  add_common(prof, prof_flags, false);
  prof->add_option("--metric", prof_metric, "mse, relative_l2 or one_minus_cosine");

  CommonFlags sim_flags;
  std::string sim_workers = "1,2,4", sim_methods = "all";
  auto* sim = app.add_subcommand("simulate-parallel", "communication volume per method");
  add_common(sim, sim_flags, false);
  sim->add_option("--workers", sim_workers, "comma list of worker counts");
  sim->add_option("--method", sim_methods, "comma list of methods or 'all'");

  CommonFlags abl_flags;
  std::string abl_disable;
  auto* abl = app.add_subcommand("ablate", "disable broadcasting one component at a time");
  add_common(abl, abl_flags, false);
  abl->add_option("--disable", abl_disable, "comma list of kinds (default: all broadcast kinds)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : pab::kExitValidation;
  }

  auto& out = std::cout;
  auto& err = std::cerr;

  if (*gen) {
    return pab::guarded(err, [&] {
      return pab::cmd_generate(pab::load_run_config(gen_flags.config, gen_flags.overrides()), out);
    });
  }
  if (*cmp) {
    return pab::guarded(err, [&] {
      return pab::cmd_compare(cmp_a, cmp_b, pab::split_list(cmp_metrics),
                              cmp_out.empty() ? cmp_b : cmp_out, out);
    });
  }
  if (*prof) {
    return pab::guarded(err, [&] {
      const auto metric = pab::parse_diff_metric(prof_metric);
      if (!metric) throw pab::ValidationError("unknown metric '" + prof_metric + "'");
      return pab::cmd_profile(pab::load_run_config(prof_flags.config, prof_flags.overrides()),
                              *metric, out);
    });
  }
  if (*sim) {
    return pab::guarded(err, [&] {
      std::vector<std::size_t> workers;
      for (const auto& w : pab::split_list(sim_workers)) {
        try {
          workers.push_back(static_cast<std::size_t>(std::stoul(w)));
        } catch (const std::exception&) {
          throw pab::ValidationError("bad worker count '" + w + "'");
        }
      }
      auto cfg = pab::load_run_config(sim_flags.config, sim_flags.overrides());
      std::vector<pab::CommMethod> methods;
      if (sim_methods == "all") {
        for (auto m : pab::kAllMethods) {
          if (m == pab::CommMethod::kBroadcastSp &&
              !std::holds_alternative<pab::PabConfig>(cfg.policy)) {
            continue;
          }
          methods.push_back(m);
        }
      } else {
        for (const auto& name : pab::split_list(sim_methods)) {
          auto m = pab::parse_method(name);
          if (!m) throw pab::ValidationError("unknown method '" + name + "'");
          methods.push_back(*m);
        }
      }
      for (auto w : workers) pab::plan_shards(w, cfg.model);
      return pab::cmd_simulate_parallel(cfg, workers, methods, out);
    });
  }
  if (*abl) {
    return pab::guarded(err, [&] {
      auto cfg = pab::load_run_config(abl_flags.config, abl_flags.overrides());
      return pab::cmd_ablate(cfg, pab::parse_kinds(pab::split_list(abl_disable)), out);
    });
  }
  return pab::kExitValidation;
}
