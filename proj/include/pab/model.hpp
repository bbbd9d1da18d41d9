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

// Seeded toy video diffusion transformer.
//
// Each layer pair is a spatial block {spatial attn, cross attn, MLP} followed
// by a temporal block {temporal attn, [cross attn], MLP}. Self-attention and
// MLP sites are conditioned adaLN-style: layer_norm then x * (1 + scale) +
// shift, with (shift, scale) projected from the timestep conditioning vector.
// Cross attention uses layer_norm only.
//
// The site kernels below operate on one batch element's token matrix of
// shape (frames * tokens) x D. They never look at the model's configured T
// and S, only at the extents passed in, so the same kernels serve a whole
// latent and a shard of it.

#ifndef PAB_MODEL_HPP_
#define PAB_MODEL_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include "pab/error.hpp"
#include "pab/model_config.hpp"
#include "pab/numerics.hpp"
#include "pab/tensor.hpp"

namespace pab {

inline constexpr double kLayerNormEps = 1e-6;

template <typename Real>
struct AttnParams {
  std::vector<Real> gamma, beta;
  Matrix<Real> w_mod;  // D x 2D (shift | scale); empty for cross attention
  Matrix<Real> wq, wk, wv, wo;
};

template <typename Real>
struct MlpParams {
  std::vector<Real> gamma, beta;
  Matrix<Real> w_mod;
  Matrix<Real> w1, w2;
};

template <typename Real>
struct LayerParams {
  AttnParams<Real> spatial_attn;
  AttnParams<Real> spatial_cross;
  MlpParams<Real> spatial_mlp;
  AttnParams<Real> temporal_attn;
  AttnParams<Real> temporal_cross;  // populated only with cross_in_temporal
  MlpParams<Real> temporal_mlp;
};

template <typename Real>
struct ModelParams {
  ModelConfig cfg;
  std::uint64_t seed = 0;
  Matrix<Real> text_table;  // vocab x D
  Matrix<Real> w_in;        // D x D
  Matrix<Real> w_t;         // D x D, timestep embedding projection
  std::vector<LayerParams<Real>> layers;
  std::vector<Real> final_gamma, final_beta;
  Matrix<Real> final_mod;   // D x 2D
  Matrix<Real> w_out;       // D x D

  // Visits every parameter array in initialization order.
  template <typename Fn>
  void for_each_array(Fn&& fn) const {
    auto vec = [&](const std::vector<Real>& v) { fn(std::span<const Real>(v)); };
    auto mat = [&](const Matrix<Real>& m) { fn(m.values()); };
    auto attn = [&](const AttnParams<Real>& a) {
      vec(a.gamma); vec(a.beta); mat(a.w_mod);
      mat(a.wq); mat(a.wk); mat(a.wv); mat(a.wo);
    };
    auto mlp = [&](const MlpParams<Real>& m) {
      vec(m.gamma); vec(m.beta); mat(m.w_mod); mat(m.w1); mat(m.w2);
    };
    mat(text_table); mat(w_in); mat(w_t);
    for (const auto& l : layers) {
      attn(l.spatial_attn); attn(l.spatial_cross); mlp(l.spatial_mlp);
      attn(l.temporal_attn); attn(l.temporal_cross); mlp(l.temporal_mlp);
    }
    vec(final_gamma); vec(final_beta); mat(final_mod); mat(w_out);
  }

  std::uint64_t digest() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for_each_array([&](std::span<const Real> v) {
      h ^= pab::digest(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    });
    return h;
  }
};

// Uniform in [-1/sqrt(D), 1/sqrt(D)), drawn in double and rounded to Real so
// f32 and f64 models share one set of underlying draws.
template <typename Real>
ModelParams<Real> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RandomStream rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  const std::size_t d = cfg.hidden;
  auto draw = [&](std::size_t n) {
    std::vector<Real> out(n);
    for (auto& v : out) v = static_cast<Real>(-bound + 2.0 * bound * rng.next_unit());
    return out;
  };
  auto mat = [&](std::size_t r, std::size_t c) {
    return Matrix<Real>(r, c, draw(r * c));
  };
  auto attn = [&](bool modulated) {
    AttnParams<Real> a;
    a.gamma = draw(d);
    a.beta = draw(d);
    if (modulated) a.w_mod = mat(d, 2 * d);
    a.wq = mat(d, d);
    a.wk = mat(d, d);
    a.wv = mat(d, d);
    a.wo = mat(d, d);
    return a;
  };
  auto mlp = [&]() {
    MlpParams<Real> m;
    m.gamma = draw(d);
    m.beta = draw(d);
    m.w_mod = mat(d, 2 * d);
    m.w1 = mat(d, cfg.mlp_hidden());
    m.w2 = mat(cfg.mlp_hidden(), d);
    return m;
  };

  ModelParams<Real> p;
  p.cfg = cfg;
  p.seed = seed;
  p.text_table = mat(cfg.vocab, d);
  p.w_in = mat(d, d);
  p.w_t = mat(d, d);
  p.layers.resize(cfg.layers);
  for (auto& l : p.layers) {
    l.spatial_attn = attn(true);
    l.spatial_cross = attn(false);
    l.spatial_mlp = mlp();
    l.temporal_attn = attn(true);
    if (cfg.cross_in_temporal) l.temporal_cross = attn(false);
    l.temporal_mlp = mlp();
  }
  p.final_gamma = draw(d);
  p.final_beta = draw(d);
  p.final_mod = mat(d, 2 * d);
  p.w_out = mat(d, d);
  return p;
}

// Sinusoidal embedding: first half sin(t * f_i), second half cos(t * f_i),
// with f_i geometric from 1 down to 1e-4. Odd D leaves the last entry 0.
inline std::vector<double> timestep_embedding(double t, std::size_t d) {
  if (t < 0.0 || t > 1000.0) {
    throw ValidationError("timestep must lie in [0, 1000]");
  }
  std::vector<double> emb(d, 0.0);
  const std::size_t half = d / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double f =
        half == 1 ? 1.0
                  : std::pow(10.0, -4.0 * static_cast<double>(i) /
                                       static_cast<double>(half - 1));
    emb[i] = std::sin(t * f);
    emb[half + i] = std::cos(t * f);
  }
  return emb;
}

// silu(emb(t) * W_t) as a 1 x D row.
template <typename Real>
Matrix<Real> conditioning(const ModelParams<Real>& p, double t) {
  const auto emb = timestep_embedding(t, p.cfg.hidden);
  Matrix<Real> e(1, p.cfg.hidden);
  for (std::size_t i = 0; i < emb.size(); ++i) e(0, i) = static_cast<Real>(emb[i]);
  Matrix<Real> c = matmul(e, p.w_t);
  for (auto& v : c.values()) v = v / (Real(1) + std::exp(-v));
  return c;
}

template <typename Real>
Matrix<Real> embed_text(const ModelParams<Real>& p,
                        const std::vector<int>& ids) {
  if (ids.size() != p.cfg.text_tokens) {
    throw ShapeError("text must have exactly text_tokens ids");
  }
  Matrix<Real> out(ids.size(), p.cfg.hidden);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= p.cfg.vocab) {
      throw ValidationError("text token id out of vocabulary");
    }
    const Real* src = p.text_table.row(static_cast<std::size_t>(ids[i]));
    std::copy(src, src + p.cfg.hidden, out.row(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Site kernels
// ---------------------------------------------------------------------------

enum class Grouping { kSpatial, kTemporal };

template <typename Real>
struct SiteResult {
  Matrix<Real> out;                   // post-projection, pre-residual
  std::vector<Matrix<Real>> scores;   // [group * heads + head] when captured
  double attn_seconds = 0.0;          // attention proper
  double related_seconds = 0.0;       // norm, modulate, projections
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Row indices of one attention group in a frame-major token matrix.
inline std::vector<std::size_t> group_rows(Grouping g, std::size_t group,
                                           std::size_t frames,
                                           std::size_t tokens) {
  std::vector<std::size_t> rows;
  if (g == Grouping::kSpatial) {
    rows.resize(tokens);
    for (std::size_t s = 0; s < tokens; ++s) rows[s] = group * tokens + s;
  } else {
    rows.resize(frames);
    for (std::size_t t = 0; t < frames; ++t) rows[t] = t * tokens + group;
  }
  return rows;
}

inline std::size_t group_count(Grouping g, std::size_t frames,
                               std::size_t tokens) {
  return g == Grouping::kSpatial ? frames : tokens;
}

template <typename Real>
Matrix<Real> gather(const Matrix<Real>& src, const std::vector<std::size_t>& rows,
                    std::size_t col0, std::size_t width) {
  Matrix<Real> out(rows.size(), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Real* s = src.row(rows[i]) + col0;
    std::copy(s, s + width, out.row(i));
  }
  return out;
}

template <typename Real>
void scatter(Matrix<Real>& dst, const Matrix<Real>& src,
             const std::vector<std::size_t>& rows, std::size_t col0) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(src.row(i), src.row(i) + src.cols(), dst.row(rows[i]) + col0);
  }
}

template <typename Real>
Matrix<Real> column_slice(const Matrix<Real>& src, std::size_t col0,
                          std::size_t width) {
  Matrix<Real> out(src.rows(), width);
  for (std::size_t r = 0; r < src.rows(); ++r) {
    std::copy(src.row(r) + col0, src.row(r) + col0 + width, out.row(r));
  }
  return out;
}

template <typename Real>
Matrix<Real> project(const Matrix<Real>& x, const Matrix<Real>& w,
                     FlopCategory cat) {
  FlopCategoryScope scope(cat);
  return matmul(x, w);
}

}  // namespace detail

// (shift | scale) as a 1 x 2D row.
template <typename Real>
Matrix<Real> modulation(const Matrix<Real>& cond, const Matrix<Real>& w_mod) {
  return detail::project(cond, w_mod, FlopCategory::kNormModulate);
}

template <typename Real>
void modulate_inplace(Matrix<Real>& h, const Matrix<Real>& mod) {
  const std::size_t d = h.cols();
  if (mod.cols() != 2 * d) throw ShapeError("modulation width must be 2*D");
  const Real* shift = mod.row(0);
  const Real* scale = mod.row(0) + d;
  for (std::size_t r = 0; r < h.rows(); ++r) {
    Real* row = h.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = row[j] * (Real(1) + scale[j]) + shift[j];
    }
  }
  count_flops(FlopCategory::kNormModulate, kModulateFlopsPerElement * h.size());
}

template <typename Real>
Matrix<Real> normalize_input(const Matrix<Real>& x, const std::vector<Real>& gamma,
                             const std::vector<Real>& beta, const Matrix<Real>* cond,
                             const Matrix<Real>& w_mod) {
  Matrix<Real> h = layer_norm<Real>(x, gamma, beta, static_cast<Real>(kLayerNormEps));
  if (cond != nullptr) modulate_inplace(h, modulation(*cond, w_mod));
  return h;
}

// Full self-attention site: norm -> modulate -> qkv -> per-group multi-head
// attention -> output projection.
template <typename Real>
SiteResult<Real> self_attention_site(const AttnParams<Real>& p,
                                     const Matrix<Real>& x, std::size_t frames,
                                     std::size_t tokens, Grouping grouping,
                                     std::size_t heads, const Matrix<Real>& cond,
                                     bool capture_scores) {
  using detail::Clock;
  SiteResult<Real> res;
  auto t0 = Clock::now();
  const std::size_t d = x.cols(), dh = d / heads;
  const Matrix<Real> h = normalize_input(x, p.gamma, p.beta, &cond, p.w_mod);
  const Matrix<Real> q = detail::project(h, p.wq, FlopCategory::kQkvProj);
  const Matrix<Real> k = detail::project(h, p.wk, FlopCategory::kQkvProj);
  const Matrix<Real> v = detail::project(h, p.wv, FlopCategory::kQkvProj);
  res.related_seconds += detail::seconds_since(t0);

  t0 = Clock::now();
  Matrix<Real> o(x.rows(), d);
  const std::size_t groups = detail::group_count(grouping, frames, tokens);
  for (std::size_t g = 0; g < groups; ++g) {
    const auto rows = detail::group_rows(grouping, g, frames, tokens);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      auto qh = detail::gather(q, rows, hd * dh, dh);
      auto kh = detail::gather(k, rows, hd * dh, dh);
      auto vh = detail::gather(v, rows, hd * dh, dh);
      auto r = scaled_dot_attention(qh, kh, vh, capture_scores);
      detail::scatter(o, r.out, rows, hd * dh);
      if (capture_scores) res.scores.push_back(std::move(*r.scores));
    }
  }
  res.attn_seconds += detail::seconds_since(t0);

  t0 = Clock::now();
  res.out = detail::project(o, p.wo, FlopCategory::kOutProj);
  res.related_seconds += detail::seconds_since(t0);
  return res;
}

// Score-replay path: norm -> modulate -> v -> cached probs * v -> output
// projection. The query/key projections and the score matmul are skipped.
template <typename Real>
SiteResult<Real> self_attention_replay_scores(
    const AttnParams<Real>& p, const Matrix<Real>& x, std::size_t frames,
    std::size_t tokens, Grouping grouping, std::size_t heads,
    const Matrix<Real>& cond, const std::vector<Matrix<Real>>& scores) {
  using detail::Clock;
  SiteResult<Real> res;
  const std::size_t groups = detail::group_count(grouping, frames, tokens);
  if (scores.size() != groups * heads) {
    throw PolicyError("cached scores do not match the site's grouping");
  }
  auto t0 = Clock::now();
  const std::size_t d = x.cols(), dh = d / heads;
  const Matrix<Real> h = normalize_input(x, p.gamma, p.beta, &cond, p.w_mod);
  const Matrix<Real> v = detail::project(h, p.wv, FlopCategory::kQkvProj);
  res.related_seconds += detail::seconds_since(t0);

  t0 = Clock::now();
  Matrix<Real> o(x.rows(), d);
  for (std::size_t g = 0; g < groups; ++g) {
    const auto rows = detail::group_rows(grouping, g, frames, tokens);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      auto vh = detail::gather(v, rows, hd * dh, dh);
      detail::scatter(o, apply_scores(scores[g * heads + hd], vh), rows, hd * dh);
    }
  }
  res.attn_seconds += detail::seconds_since(t0);

  t0 = Clock::now();
  res.out = detail::project(o, p.wo, FlopCategory::kOutProj);
  res.related_seconds += detail::seconds_since(t0);
  return res;
}

// Cross attention: every video token queries the M text tokens.
template <typename Real>
SiteResult<Real> cross_attention_site(const AttnParams<Real>& p,
                                      const Matrix<Real>& x,
                                      const Matrix<Real>& text,
                                      std::size_t heads, bool capture_scores) {
  using detail::Clock;
  SiteResult<Real> res;
  auto t0 = Clock::now();
  const std::size_t d = x.cols(), dh = d / heads;
  const Matrix<Real> h = normalize_input<Real>(x, p.gamma, p.beta, nullptr, p.w_mod);
  const Matrix<Real> q = detail::project(h, p.wq, FlopCategory::kQkvProj);
  const Matrix<Real> k = detail::project(text, p.wk, FlopCategory::kQkvProj);
  const Matrix<Real> v = detail::project(text, p.wv, FlopCategory::kQkvProj);
  res.related_seconds += detail::seconds_since(t0);

  t0 = Clock::now();
  Matrix<Real> o(x.rows(), d);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    auto r = scaled_dot_attention(detail::column_slice(q, hd * dh, dh),
                                  detail::column_slice(k, hd * dh, dh),
                                  detail::column_slice(v, hd * dh, dh),
                                  capture_scores);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      std::copy(r.out.row(i), r.out.row(i) + dh, o.row(i) + hd * dh);
    }
    if (capture_scores) res.scores.push_back(std::move(*r.scores));
  }
  res.attn_seconds += detail::seconds_since(t0);

  t0 = Clock::now();
  res.out = detail::project(o, p.wo, FlopCategory::kOutProj);
  res.related_seconds += detail::seconds_since(t0);
  return res;
}

template <typename Real>
SiteResult<Real> cross_attention_replay_scores(
    const AttnParams<Real>& p, std::size_t rows, const Matrix<Real>& text,
    std::size_t heads, const std::vector<Matrix<Real>>& scores) {
  using detail::Clock;
  SiteResult<Real> res;
  if (scores.size() != heads || scores[0].rows() != rows) {
    throw PolicyError("cached cross scores do not match the site");
  }
  auto t0 = Clock::now();
  const std::size_t d = text.cols(), dh = d / heads;
  const Matrix<Real> v = detail::project(text, p.wv, FlopCategory::kQkvProj);
  res.related_seconds += detail::seconds_since(t0);

  t0 = Clock::now();
  Matrix<Real> o(rows, d);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    auto oh = apply_scores(scores[hd], detail::column_slice(v, hd * dh, dh));
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy(oh.row(i), oh.row(i) + dh, o.row(i) + hd * dh);
    }
  }
  res.attn_seconds += detail::seconds_since(t0);

  t0 = Clock::now();
  res.out = detail::project(o, p.wo, FlopCategory::kOutProj);
  res.related_seconds += detail::seconds_since(t0);
  return res;
}

template <typename Real>
Matrix<Real> mlp_site(const MlpParams<Real>& p, const Matrix<Real>& x,
                      const Matrix<Real>& cond) {
  const Matrix<Real> h = normalize_input(x, p.gamma, p.beta, &cond, p.w_mod);
  Matrix<Real> a = gelu(detail::project(h, p.w1, FlopCategory::kMlp));
  return detail::project(a, p.w2, FlopCategory::kMlp);
}

// Final norm -> modulate -> projection. The noise prediction is the input
// latent plus this head, which keeps the toy sampler's trajectory bounded.
template <typename Real>
Matrix<Real> output_head(const ModelParams<Real>& p, const Matrix<Real>& h,
                         const Matrix<Real>& cond) {
  Matrix<Real> n = normalize_input(h, p.final_gamma, p.final_beta, &cond, p.final_mod);
  return matmul(n, p.w_out);
}

}  // namespace pab

#endif  // PAB_MODEL_HPP_
