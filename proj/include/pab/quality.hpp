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

// Frame-wise MSE, PSNR and SSIM. A latent of batch B and T frames is viewed
// as B*T frames, each an S x D grid (tokens by channels).

#ifndef PAB_QUALITY_HPP_
#define PAB_QUALITY_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pab/error.hpp"
#include "pab/tensor.hpp"

namespace pab {

struct FrameSet {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;  // frame-major, then row-major

  FrameSet() = default;
  FrameSet(std::size_t n, std::size_t h, std::size_t w)
      : count(n), height(h), width(w), data(n * h * w, 0.0) {}

  std::size_t frame_size() const { return height * width; }
  const double* frame(std::size_t f) const { return data.data() + f * frame_size(); }
  double* frame(std::size_t f) { return data.data() + f * frame_size(); }
  bool same_shape(const FrameSet& o) const {
    return count == o.count && height == o.height && width == o.width;
  }
};

template <typename Real>
FrameSet frames_of(const Latent<Real>& x) {
  FrameSet f(x.batch_size() * x.frames, x.tokens, x.channels);
  std::size_t i = 0;
  for (const auto& m : x.batch) {
    for (Real v : m.values()) f.data[i++] = static_cast<double>(v);
  }
  return f;
}

// max - min of the reference; 1 when the reference is constant.
inline double empirical_range(const FrameSet& ref) {
  if (ref.data.empty()) return 1.0;
  const auto [lo, hi] = std::minmax_element(ref.data.begin(), ref.data.end());
  const double r = *hi - *lo;
  return r > 0.0 ? r : 1.0;
}

struct FrameMetricResult {
  std::string metric;
  std::vector<double> per_frame;
  double mean = 0.0;
  std::map<std::string, double> params;
};

inline void check_pair(const FrameSet& a, const FrameSet& b) {
  if (!a.same_shape(b)) throw ShapeError("frame sets differ in shape");
  if (a.count == 0 || a.frame_size() == 0) throw ShapeError("empty frame set");
}

inline FrameMetricResult mse_video(const FrameSet& a, const FrameSet& b) {
  check_pair(a, b);
  FrameMetricResult r;
  r.metric = "mse";
  const std::size_t n = a.frame_size();
  double total = 0.0;
  for (std::size_t f = 0; f < a.count; ++f) {
    const double* x = a.frame(f);
    const double* y = b.frame(f);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x[i] - y[i];
      s += d * d;
      total += d * d;
    }
    r.per_frame.push_back(s / static_cast<double>(n));
  }
  // Same summation order as a flat mean over every element.
  r.mean = total / static_cast<double>(a.data.size());
  return r;
}

enum class InfinityMean { kPropagate, kExclude };

inline FrameMetricResult psnr(const FrameSet& a, const FrameSet& b, double peak,
                              InfinityMean inf_mode = InfinityMean::kPropagate) {
  check_pair(a, b);
  if (!(peak > 0.0)) throw ValidationError("psnr peak value must be positive");
  const FrameMetricResult m = mse_video(a, b);
  FrameMetricResult r;
  r.metric = "psnr";
  r.params["R"] = peak;
  const double inf = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  std::size_t finite = 0;
  bool any_inf = false;
  for (double e : m.per_frame) {
    const double v = e == 0.0 ? inf : 10.0 * std::log10(peak * peak / e);
    r.per_frame.push_back(v);
    if (std::isinf(v)) {
      any_inf = true;
    } else {
      sum += v;
      ++finite;
    }
  }
  if (finite == 0 || (any_inf && inf_mode == InfinityMean::kPropagate)) {
    r.mean = inf;
  } else {
    r.mean = sum / static_cast<double>(finite);
  }
  return r;
}

struct SsimParams {
  double c1 = 0.0;
  double c2 = 0.0;
  std::size_t window = 8;

  static SsimParams for_range(double peak, std::size_t window = 8) {
    return {(0.01 * peak) * (0.01 * peak), (0.03 * peak) * (0.03 * peak), window};
  }
};

namespace detail {

// (h+1) x (w+1) inclusive prefix sums.
class SummedArea {
 public:
  SummedArea(std::size_t h, std::size_t w) : w_(w + 1), sums_((h + 1) * (w + 1), 0.0) {}

  template <typename Fn>
  void build(std::size_t h, std::size_t w, Fn&& value) {
    for (std::size_t i = 0; i < h; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < w; ++j) {
        row += value(i, j);
        sums_[(i + 1) * w_ + j + 1] = sums_[i * w_ + j + 1] + row;
      }
    }
  }
  double box(std::size_t i, std::size_t j, std::size_t n) const {
    return sums_[(i + n) * w_ + j + n] - sums_[i * w_ + j + n] -
           sums_[(i + n) * w_ + j] + sums_[i * w_ + j];
  }

 private:
  std::size_t w_;
  std::vector<double> sums_;
};

}  // namespace detail

// Uniform n x n windows, stride 1, population statistics per window; the
// frame value is the mean over windows and the result mean is over frames.
inline FrameMetricResult ssim(const FrameSet& a, const FrameSet& b,
                              const SsimParams& prm) {
  check_pair(a, b);
  const std::size_t n = prm.window;
  if (n == 0 || n > a.height || n > a.width) {
    throw ValidationError("ssim window larger than the frame", "window-too-large");
  }
  FrameMetricResult r;
  r.metric = "ssim";
  r.params["C1"] = prm.c1;
  r.params["C2"] = prm.c2;
  r.params["window"] = static_cast<double>(n);
  const std::size_t h = a.height, w = a.width;
  const double area = static_cast<double>(n * n);
  double total = 0.0;
  for (std::size_t f = 0; f < a.count; ++f) {
    const double* x = a.frame(f);
    const double* y = b.frame(f);
    detail::SummedArea sx(h, w), sy(h, w), sxx(h, w), syy(h, w), sxy(h, w);
    sx.build(h, w, [&](std::size_t i, std::size_t j) { return x[i * w + j]; });
    sy.build(h, w, [&](std::size_t i, std::size_t j) { return y[i * w + j]; });
    sxx.build(h, w, [&](std::size_t i, std::size_t j) { return x[i * w + j] * x[i * w + j]; });
    syy.build(h, w, [&](std::size_t i, std::size_t j) { return y[i * w + j] * y[i * w + j]; });
    sxy.build(h, w, [&](std::size_t i, std::size_t j) { return x[i * w + j] * y[i * w + j]; });
    double frame_sum = 0.0;
    std::size_t windows = 0;
    for (std::size_t i = 0; i + n <= h; ++i) {
      for (std::size_t j = 0; j + n <= w; ++j) {
        const double mx = sx.box(i, j, n) / area;
        const double my = sy.box(i, j, n) / area;
        const double vx = sxx.box(i, j, n) / area - mx * mx;
        const double vy = syy.box(i, j, n) / area - my * my;
        const double cxy = sxy.box(i, j, n) / area - mx * my;
        frame_sum += ((2.0 * mx * my + prm.c1) * (2.0 * cxy + prm.c2)) /
                     ((mx * mx + my * my + prm.c1) * (vx + vy + prm.c2));
        ++windows;
      }
    }
    const double v = frame_sum / static_cast<double>(windows);
    r.per_frame.push_back(v);
    total += v;
  }
  r.mean = total / static_cast<double>(a.count);
  return r;
}

inline void write_quality_csv(std::ostream& os, const std::vector<FrameMetricResult>& results) {
  auto fmt = [](double v) {
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  os << "metric,frame,value,mean,params\n";
  for (const auto& r : results) {
    std::string params;
    for (const auto& [k, v] : r.params) {
      if (!params.empty()) params += ';';
      params += k + "=" + fmt(v);
    }
    for (std::size_t f = 0; f < r.per_frame.size(); ++f) {
      os << r.metric << ',' << f << ',' << fmt(r.per_frame[f]) << ',' << fmt(r.mean)
         << ',' << params << '\n';
    }
  }
}

}  // namespace pab

#endif  // PAB_QUALITY_HPP_
