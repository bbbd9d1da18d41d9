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

// Run configuration: JSON parsing with recorded defaults, canonical
// serialization, cross-field validation and run manifests.

#ifndef PAB_CONFIG_HPP_
#define PAB_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pab/error.hpp"
#include "pab/model_config.hpp"
#include "pab/parallel.hpp"
#include "pab/policy.hpp"
#include "pab/schedule.hpp"

namespace pab {

using Json = nlohmann::ordered_json;

enum class Precision { kF32, kF64 };

inline const char* precision_name(Precision p) {
  return p == Precision::kF32 ? "f32" : "f64";
}

inline std::optional<Precision> parse_precision(std::string_view s) {
  if (s == "f32") return Precision::kF32;
  if (s == "f64") return Precision::kF64;
  return std::nullopt;
}

inline const char* broadcast_object_name(BroadcastObject b) {
  return b == BroadcastObject::kOutputs ? "outputs" : "scores";
}

inline std::optional<BroadcastObject> parse_broadcast_object(std::string_view s) {
  if (s == "outputs") return BroadcastObject::kOutputs;
  if (s == "scores") return BroadcastObject::kScores;
  return std::nullopt;
}

struct RunConfig {
  ModelConfig model;
  std::uint64_t seed = 11;
  std::size_t steps = 30;
  ScheduleScheme scheme = ScheduleScheme::kLinear;
  std::string preset;  // empty when the policy is given explicitly
  PolicyConfig policy = NoPolicy{};
  std::size_t workers = 1;
  CommMethod method = CommMethod::kDsp;
  std::string out = "out";
  Precision precision = Precision::kF32;
  bool guidance = true;
  double guidance_scale = 4.0;
  BroadcastObject broadcast_object = BroadcastObject::kOutputs;
  RangeSemantics range_semantics = RangeSemantics::kPeriod;
  std::vector<int> text;  // empty selects the built-in prompt

  // Keys that were absent from the input and took their default value,
  // plus notes from fitting presets to the model. Not serialized.
  std::vector<std::string> defaults_filled;
  std::vector<std::string> notes;

  bool operator==(const RunConfig& o) const {
    return model == o.model && seed == o.seed && steps == o.steps &&
           scheme == o.scheme && preset == o.preset && policy == o.policy &&
           workers == o.workers && method == o.method && out == o.out &&
           precision == o.precision && guidance == o.guidance &&
           guidance_scale == o.guidance_scale &&
           broadcast_object == o.broadcast_object &&
           range_semantics == o.range_semantics && text == o.text;
  }

  TimestepSchedule schedule() const { return make_schedule(steps, scheme); }

  // Cross-field checks. Throws ValidationError.
  void validate() const {
    model.validate();
    if (steps < 1) throw ValidationError("schedule.steps must be >= 1");
    plan_shards(workers, model);
    if (method == CommMethod::kBroadcastSp && !std::holds_alternative<PabConfig>(policy)) {
      throw ValidationError("broadcast_sp requires a pab policy");
    }
    if (!text.empty()) {
      if (text.size() != model.text_tokens) {
        throw ValidationError("text must hold model.text_tokens ids");
      }
      for (int id : text) {
        if (id < 0 || static_cast<std::size_t>(id) >= model.vocab) {
          throw ValidationError("text id out of vocabulary range");
        }
      }
    }
    if (!(guidance_scale >= 0.0)) throw ValidationError("guidance_scale must be >= 0");
    validate_policy(policy, steps, model.layers);
  }
};

// ---------------------------------------------------------------------------
// Policy <-> JSON
// ---------------------------------------------------------------------------

inline Json policy_to_json(const PolicyConfig& p) {
  Json j;
  j["type"] = policy_type_name(p);
  if (const auto* pab = std::get_if<PabConfig>(&p)) {
    j["ranges"] = {{"spatial", pab->spatial_range},
                   {"temporal", pab->temporal_range},
                   {"cross", pab->cross_range}};
    j["window"] = {pab->window_hi, pab->window_lo};
    j["mlp"] = {{"timesteps", pab->mlp.timesteps},
                {"blocks", pab->mlp.blocks},
                {"range", pab->mlp.range}};
    Json disabled = Json::array();
    for (ComponentKind k : kAllKinds) {
      if (pab->is_disabled(k)) disabled.push_back(kind_name(k));
    }
    j["disabled"] = disabled;
  } else if (const auto* tg = std::get_if<TGateConfig>(&p)) {
    j["gate_step"] = tg->gate_step;
    j["interval"] = tg->interval;
    j["warmup"] = tg->warmup;
  } else if (const auto* dd = std::get_if<DeltaDitConfig>(&p)) {
    j["gate_step"] = dd->gate_step;
    j["interval"] = dd->interval;
    j["block_lo"] = dd->block_lo;
    j["block_hi"] = dd->block_hi;
  }
  return j;
}

namespace detail {

template <typename T>
T get_or(const Json& j, const char* key, T fallback, const std::string& path,
         std::vector<std::string>* filled) {
  if (!j.is_object() || !j.contains(key)) {
    if (filled != nullptr) filled->push_back(path + key);
    return fallback;
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad value for " + path + key + ": " + e.what());
  }
}

}  // namespace detail

inline PolicyConfig policy_from_json(const Json& j, std::vector<std::string>* filled) {
  using detail::get_or;
  const std::string type = get_or<std::string>(j, "type", "none", "policy.", filled);
  if (type == "none") return NoPolicy{};
  if (type == "pab") {
    PabConfig p;
    const Json ranges = j.contains("ranges") ? j["ranges"] : Json::object();
    p.spatial_range = get_or(ranges, "spatial", p.spatial_range, "policy.ranges.", filled);
    p.temporal_range = get_or(ranges, "temporal", p.temporal_range, "policy.ranges.", filled);
    p.cross_range = get_or(ranges, "cross", p.cross_range, "policy.ranges.", filled);
    if (j.contains("window")) {
      const auto& w = j["window"];
      if (!w.is_array() || w.size() != 2) {
        throw ValidationError("policy.window must be [hi, lo]");
      }
      p.window_hi = w[0].get<double>();
      p.window_lo = w[1].get<double>();
    } else if (filled != nullptr) {
      filled->push_back("policy.window");
    }
    const Json mlp = j.contains("mlp") ? j["mlp"] : Json::object();
    p.mlp.timesteps = get_or(mlp, "timesteps", p.mlp.timesteps, "policy.mlp.", filled);
    p.mlp.blocks = get_or(mlp, "blocks", p.mlp.blocks, "policy.mlp.", filled);
    p.mlp.range = get_or(mlp, "range", p.mlp.range, "policy.mlp.", filled);
    for (const auto& name : get_or(j, "disabled", std::vector<std::string>{}, "policy.", filled)) {
      const auto k = parse_kind(name);
      if (!k) throw ValidationError("unknown component kind '" + name + "'");
      p.disabled[static_cast<int>(*k)] = true;
    }
    return p;
  }
  if (type == "tgate") {
    TGateConfig t;
    t.gate_step = get_or(j, "gate_step", t.gate_step, "policy.", filled);
    t.interval = get_or(j, "interval", t.interval, "policy.", filled);
    t.warmup = get_or(j, "warmup", t.warmup, "policy.", filled);
    return t;
  }
  if (type == "deltadit") {
    DeltaDitConfig d;
    d.gate_step = get_or(j, "gate_step", d.gate_step, "policy.", filled);
    d.interval = get_or(j, "interval", d.interval, "policy.", filled);
    d.block_lo = get_or(j, "block_lo", d.block_lo, "policy.", filled);
    d.block_hi = get_or(j, "block_hi", d.block_hi, "policy.", filled);
    return d;
  }
  throw ValidationError("unknown policy type '" + type + "'");
}

// Resolves a preset by name, fits it to the model and applies the run's
// range semantics. Throws kind "unknown-preset".
inline PolicyConfig resolve_preset(const std::string& name, std::size_t layers,
                                   std::vector<std::string>* notes) {
  auto p = find_preset(name);
  if (!p) throw ValidationError("unknown preset '" + name + "'", "unknown-preset");
  return fit_to_layers(*p, layers, notes);
}

inline void apply_semantics(PolicyConfig& policy, RangeSemantics s) {
  if (auto* pab = std::get_if<PabConfig>(&policy)) pab->semantics = s;
}

// ---------------------------------------------------------------------------
// RunConfig <-> JSON
// ---------------------------------------------------------------------------

inline RunConfig config_from_json(const Json& j) {
  using detail::get_or;
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig c;
  auto* filled = &c.defaults_filled;

  const Json model = j.contains("model") ? j["model"] : Json::object();
  ModelConfig& m = c.model;
  m.layers = get_or(model, "layers", m.layers, "model.", filled);
  m.hidden = get_or(model, "hidden", m.hidden, "model.", filled);
  m.heads = get_or(model, "heads", m.heads, "model.", filled);
  m.frames = get_or(model, "frames", m.frames, "model.", filled);
  m.spatial_tokens = get_or(model, "spatial_tokens", m.spatial_tokens, "model.", filled);
  m.text_tokens = get_or(model, "text_tokens", m.text_tokens, "model.", filled);
  m.mlp_ratio = get_or(model, "mlp_ratio", m.mlp_ratio, "model.", filled);
  m.cross_in_temporal = get_or(model, "cross_in_temporal", m.cross_in_temporal, "model.", filled);
  m.vocab = get_or(model, "vocab", m.vocab, "model.", filled);
  c.seed = get_or(model, "seed", c.seed, "model.", filled);

  const Json sched = j.contains("schedule") ? j["schedule"] : Json::object();
  c.steps = get_or(sched, "steps", c.steps, "schedule.", filled);
  const auto scheme = get_or<std::string>(sched, "scheme", scheme_name(c.scheme), "schedule.", filled);
  const auto parsed_scheme = parse_scheme(scheme);
  if (!parsed_scheme) throw ValidationError("unknown schedule scheme '" + scheme + "'");
  c.scheme = *parsed_scheme;

  const auto semantics = get_or<std::string>(j, "range_semantics", "period", "", filled);
  const auto parsed_sem = parse_semantics(semantics);
  if (!parsed_sem) throw ValidationError("unknown range_semantics '" + semantics + "'");
  c.range_semantics = *parsed_sem;

  const Json policy = j.contains("policy") ? j["policy"] : Json::object();
  if (policy.is_string()) {
    c.preset = policy.get<std::string>();
  } else if (policy.is_object() && policy.contains("preset")) {
    c.preset = policy["preset"].get<std::string>();
  }
  if (!c.preset.empty()) {
    c.policy = resolve_preset(c.preset, m.layers, &c.notes);
  } else {
    c.policy = policy_from_json(policy, filled);
    // Canonical output keeps the preset name next to the resolved body.
    if (policy.is_object() && policy.contains("preset_name")) {
      c.preset = policy["preset_name"].get<std::string>();
    }
  }
  apply_semantics(c.policy, c.range_semantics);

  const Json par = j.contains("parallel") ? j["parallel"] : Json::object();
  c.workers = get_or(par, "workers", c.workers, "parallel.", filled);
  const auto method = get_or<std::string>(par, "method", method_name(c.method), "parallel.", filled);
  const auto parsed_method = parse_method(method);
  if (!parsed_method) throw ValidationError("unknown method '" + method + "'");
  c.method = *parsed_method;

  c.out = get_or(j, "out", c.out, "", filled);
  const auto prec = get_or<std::string>(j, "precision", "f32", "", filled);
  const auto parsed_prec = parse_precision(prec);
  if (!parsed_prec) throw ValidationError("unknown precision '" + prec + "'");
  c.precision = *parsed_prec;
  c.guidance = get_or(j, "guidance", c.guidance, "", filled);
  c.guidance_scale = get_or(j, "guidance_scale", c.guidance_scale, "", filled);
  const auto bo = get_or<std::string>(j, "broadcast_object", "outputs", "", filled);
  const auto parsed_bo = parse_broadcast_object(bo);
  if (!parsed_bo) throw ValidationError("unknown broadcast_object '" + bo + "'");
  c.broadcast_object = *parsed_bo;
  c.text = get_or(j, "text", c.text, "", filled);
  return c;
}

// Canonical form: the resolved policy is always written out in full, so a
// parse of the output does not depend on the preset table.
inline Json config_to_json(const RunConfig& c) {
  Json j;
  j["model"] = {{"layers", c.model.layers},
                {"hidden", c.model.hidden},
                {"heads", c.model.heads},
                {"frames", c.model.frames},
                {"spatial_tokens", c.model.spatial_tokens},
                {"text_tokens", c.model.text_tokens},
                {"mlp_ratio", c.model.mlp_ratio},
                {"cross_in_temporal", c.model.cross_in_temporal},
                {"vocab", c.model.vocab},
                {"seed", c.seed}};
  j["schedule"] = {{"steps", c.steps}, {"scheme", scheme_name(c.scheme)}};
  Json policy = policy_to_json(c.policy);
  if (!c.preset.empty()) policy["preset_name"] = c.preset;
  j["policy"] = policy;
  j["parallel"] = {{"workers", c.workers}, {"method", method_name(c.method)}};
  j["out"] = c.out;
  j["precision"] = precision_name(c.precision);
  j["guidance"] = c.guidance;
  j["guidance_scale"] = c.guidance_scale;
  j["broadcast_object"] = broadcast_object_name(c.broadcast_object);
  j["range_semantics"] = semantics_name(c.range_semantics);
  j["text"] = c.text;
  return j;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid JSON in " + path.string() + ": " + e.what(),
                          "invalid-config");
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path));
}

}  // namespace pab

#endif  // PAB_CONFIG_HPP_
