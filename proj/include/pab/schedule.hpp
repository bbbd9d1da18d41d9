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

#ifndef PAB_SCHEDULE_HPP_
#define PAB_SCHEDULE_HPP_

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pab/error.hpp"

namespace pab {

inline constexpr double kMaxTimestep = 1000.0;

enum class ScheduleScheme { kLinear, kDdimLinearBeta };

inline const char* scheme_name(ScheduleScheme s) {
  return s == ScheduleScheme::kLinear ? "linear" : "ddim-linear-beta";
}

inline std::optional<ScheduleScheme> parse_scheme(std::string_view s) {
  if (s == "linear") return ScheduleScheme::kLinear;
  if (s == "ddim-linear-beta" || s == "ddim") return ScheduleScheme::kDdimLinearBeta;
  return std::nullopt;
}

// Diffusion timesteps t_0 > t_1 > ... on the [0, 1000] scale, where 1000 is
// pure noise.
struct TimestepSchedule {
  std::vector<double> timesteps;
  ScheduleScheme scheme = ScheduleScheme::kLinear;

  std::size_t size() const { return timesteps.size(); }
  double operator[](std::size_t i) const { return timesteps[i]; }

  // Index of the schedule point nearest to `t`; ties go to the earlier step.
  std::size_t nearest_step(double t) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < timesteps.size(); ++i) {
      if (std::abs(timesteps[i] - t) < std::abs(timesteps[best] - t)) best = i;
    }
    return best;
  }
};

// linear:            t_i = 1000 * (1 - i/N)
// ddim-linear-beta:  t_i = floor((N-1-i) * 1000/N) + 1 (leading spacing,
//                    offset 1), so t_0 = 1000 - 1000/N + 1 and t_{N-1} = 1.
inline TimestepSchedule make_schedule(std::size_t n, ScheduleScheme scheme) {
  if (n == 0) throw ValidationError("schedule needs at least one step");
  if (scheme == ScheduleScheme::kDdimLinearBeta && n > 1000) {
    throw ValidationError("ddim-linear-beta supports at most 1000 steps");
  }
  TimestepSchedule s;
  s.scheme = scheme;
  s.timesteps.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (scheme == ScheduleScheme::kLinear) {
      s.timesteps[i] = kMaxTimestep * (1.0 - static_cast<double>(i) / double(n));
    } else {
      s.timesteps[i] =
          std::floor(static_cast<double>(n - 1 - i) * kMaxTimestep / double(n)) + 1.0;
    }
  }
  return s;
}

// Cumulative signal retention alpha_bar(t) from a linear beta schedule
// (1e-4 .. 2e-2 over 1000 unit timesteps), linearly interpolated between
// integer timesteps. alpha_bar(0) = 1.
class NoiseSchedule {
 public:
  static constexpr double kBetaStart = 1e-4;
  static constexpr double kBetaEnd = 2e-2;
  static constexpr int kUnits = 1000;

  NoiseSchedule() {
    alpha_bar_[0] = 1.0;
    for (int j = 1; j <= kUnits; ++j) {
      const double beta =
          kBetaStart + (kBetaEnd - kBetaStart) * double(j - 1) / double(kUnits - 1);
      alpha_bar_[j] = alpha_bar_[j - 1] * (1.0 - beta);
    }
  }

  double alpha_bar(double t) const {
    if (t <= 0.0) return 1.0;
    if (t >= kMaxTimestep) return alpha_bar_[kUnits];
    const int lo = static_cast<int>(std::floor(t));
    const double frac = t - lo;
    if (frac == 0.0) return alpha_bar_[lo];
    return alpha_bar_[lo] * (1.0 - frac) + alpha_bar_[lo + 1] * frac;
  }

 private:
  std::array<double, kUnits + 1> alpha_bar_{};
};

}  // namespace pab

#endif  // PAB_SCHEDULE_HPP_
