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

#ifndef PAB_MODEL_CONFIG_HPP_
#define PAB_MODEL_CONFIG_HPP_

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pab/error.hpp"

namespace pab {

enum class ComponentKind : int { kSpatialAttn = 0, kTemporalAttn, kCrossAttn, kMlp };

inline constexpr int kNumKinds = 4;
inline constexpr std::array<ComponentKind, kNumKinds> kAllKinds = {
    ComponentKind::kSpatialAttn, ComponentKind::kTemporalAttn,
    ComponentKind::kCrossAttn, ComponentKind::kMlp};

inline const char* kind_name(ComponentKind k) {
  switch (k) {
    case ComponentKind::kSpatialAttn: return "spatial";
    case ComponentKind::kTemporalAttn: return "temporal";
    case ComponentKind::kCrossAttn: return "cross";
    case ComponentKind::kMlp: return "mlp";
  }
  return "?";
}

inline std::optional<ComponentKind> parse_kind(std::string_view s) {
  if (s == "spatial" || s == "spatial_attn") return ComponentKind::kSpatialAttn;
  if (s == "temporal" || s == "temporal_attn") return ComponentKind::kTemporalAttn;
  if (s == "cross" || s == "cross_attn") return ComponentKind::kCrossAttn;
  if (s == "mlp") return ComponentKind::kMlp;
  return std::nullopt;
}

// A cacheable location inside one spatial-temporal layer pair, listed in
// execution order. Cross attention and the MLP appear in both halves; the
// temporal cross site exists only when `cross_in_temporal` is set.
enum class Site : int {
  kSpatialAttn = 0,
  kSpatialCross,
  kSpatialMlp,
  kTemporalAttn,
  kTemporalCross,
  kTemporalMlp,
};

inline constexpr int kNumSites = 6;

inline ComponentKind kind_of(Site s) {
  switch (s) {
    case Site::kSpatialAttn: return ComponentKind::kSpatialAttn;
    case Site::kTemporalAttn: return ComponentKind::kTemporalAttn;
    case Site::kSpatialCross:
    case Site::kTemporalCross: return ComponentKind::kCrossAttn;
    case Site::kSpatialMlp:
    case Site::kTemporalMlp: return ComponentKind::kMlp;
  }
  return ComponentKind::kMlp;
}

inline const char* site_name(Site s) {
  switch (s) {
    case Site::kSpatialAttn: return "spatial_attn";
    case Site::kSpatialCross: return "cross_attn";
    case Site::kSpatialMlp: return "mlp_spatial";
    case Site::kTemporalAttn: return "temporal_attn";
    case Site::kTemporalCross: return "cross_attn_temporal";
    case Site::kTemporalMlp: return "mlp_temporal";
  }
  return "?";
}

inline bool is_temporal_half(Site s) {
  return s == Site::kTemporalAttn || s == Site::kTemporalCross ||
         s == Site::kTemporalMlp;
}

struct ModelConfig {
  std::size_t layers = 4;          // spatial-temporal layer pairs
  std::size_t hidden = 64;         // channels D
  std::size_t heads = 4;
  std::size_t frames = 8;          // T
  std::size_t spatial_tokens = 64; // S
  std::size_t text_tokens = 16;    // M
  double mlp_ratio = 4.0;
  bool cross_in_temporal = false;
  std::size_t vocab = 64;

  std::size_t head_dim() const { return hidden / heads; }
  std::size_t mlp_hidden() const {
    return static_cast<std::size_t>(std::llround(mlp_ratio * double(hidden)));
  }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v < 1) throw ValidationError(std::string(name) + " must be >= 1");
    };
    positive(layers, "layers");
    positive(hidden, "hidden");
    positive(heads, "heads");
    positive(frames, "frames");
    positive(spatial_tokens, "spatial_tokens");
    positive(text_tokens, "text_tokens");
    positive(vocab, "vocab");
    if (hidden % heads != 0) {
      throw ValidationError("hidden must be divisible by heads");
    }
    if (!(mlp_ratio > 0.0) || mlp_hidden() < 1) {
      throw ValidationError("mlp_ratio must give at least one hidden unit");
    }
  }

  // Sites of one layer pair in execution order.
  std::vector<Site> sites() const {
    std::vector<Site> s = {Site::kSpatialAttn, Site::kSpatialCross,
                           Site::kSpatialMlp, Site::kTemporalAttn};
    if (cross_in_temporal) s.push_back(Site::kTemporalCross);
    s.push_back(Site::kTemporalMlp);
    return s;
  }

  std::size_t sites_per_layer() const { return cross_in_temporal ? 6 : 5; }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace pab

#endif  // PAB_MODEL_CONFIG_HPP_
