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

// Dense kernels, the seeded random source, and the FLOP instrumentation hook
// shared by the toy model.
//
// Every reduction walks its index ascending so results are reproducible
// bit-for-bit per precision. Build with -ffp-contract=off; fused
// multiply-add contraction would change the rounding of the k-loop.

#ifndef PAB_NUMERICS_HPP_
#define PAB_NUMERICS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pab/error.hpp"

namespace pab {

// ---------------------------------------------------------------------------
// FLOP instrumentation
// ---------------------------------------------------------------------------

enum class FlopCategory : int {
  kQkvProj = 0,
  kScoreMatmul,
  kValueMatmul,
  kOutProj,
  kMlp,
  // Elementwise work: layer norm, modulation (including the shift/scale
  // projection), softmax and GELU.
  kNormModulate,
};

inline constexpr int kNumFlopCategories = 6;

inline const char* flop_category_name(FlopCategory c) {
  switch (c) {
    case FlopCategory::kQkvProj: return "qkv_proj";
    case FlopCategory::kScoreMatmul: return "score_matmul";
    case FlopCategory::kValueMatmul: return "value_matmul";
    case FlopCategory::kOutProj: return "out_proj";
    case FlopCategory::kMlp: return "mlp";
    case FlopCategory::kNormModulate: return "norm_modulate";
  }
  return "?";
}

// Per-element constants for elementwise kernels. A matmul of (m x k)(k x n)
// costs 2*m*n*k.
inline constexpr std::uint64_t kLayerNormFlopsPerElement = 7;
inline constexpr std::uint64_t kModulateFlopsPerElement = 2;
inline constexpr std::uint64_t kSoftmaxFlopsPerElement = 3;
inline constexpr std::uint64_t kScoreScaleFlopsPerElement = 1;
inline constexpr std::uint64_t kGeluFlopsPerElement = 8;

struct FlopCounter {
  std::array<std::uint64_t, kNumFlopCategories> counts{};

  std::uint64_t& operator[](FlopCategory c) {
    return counts[static_cast<int>(c)];
  }
  std::uint64_t operator[](FlopCategory c) const {
    return counts[static_cast<int>(c)];
  }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto v : counts) t += v;
    return t;
  }
  FlopCounter& operator+=(const FlopCounter& o) {
    for (int i = 0; i < kNumFlopCategories; ++i) counts[i] += o.counts[i];
    return *this;
  }
};

namespace detail {
inline thread_local FlopCounter* tl_flop_counter = nullptr;
inline thread_local FlopCategory tl_flop_category = FlopCategory::kQkvProj;
}  // namespace detail

// Installs a counter for the current thread. Kernels called while no counter
// is installed are not counted.
class FlopCounterScope {
 public:
  explicit FlopCounterScope(FlopCounter* counter)
      : prev_(detail::tl_flop_counter) {
    detail::tl_flop_counter = counter;
  }
  ~FlopCounterScope() { detail::tl_flop_counter = prev_; }
  FlopCounterScope(const FlopCounterScope&) = delete;
  FlopCounterScope& operator=(const FlopCounterScope&) = delete;

 private:
  FlopCounter* prev_;
};

// Sets the category that matmuls are charged to.
class FlopCategoryScope {
 public:
  explicit FlopCategoryScope(FlopCategory c)
      : prev_(detail::tl_flop_category) {
    detail::tl_flop_category = c;
  }
  ~FlopCategoryScope() { detail::tl_flop_category = prev_; }
  FlopCategoryScope(const FlopCategoryScope&) = delete;
  FlopCategoryScope& operator=(const FlopCategoryScope&) = delete;

 private:
  FlopCategory prev_;
};

inline void count_flops(FlopCategory c, std::uint64_t n) {
  if (detail::tl_flop_counter != nullptr) (*detail::tl_flop_counter)[c] += n;
}

inline void count_matmul_flops(std::uint64_t n) {
  count_flops(detail::tl_flop_category, n);
}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

template <typename Real>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0))
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      throw ShapeError("matrix value count does not match rows*cols");
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = Real(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  Real& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }

  Real* row(std::size_t r) { return values_.data() + r * cols_; }
  const Real* row(std::size_t r) const { return values_.data() + r * cols_; }

  std::span<Real> values() { return values_; }
  std::span<const Real> values() const { return values_; }
  std::vector<Real>& storage() { return values_; }
  const std::vector<Real>& storage() const { return values_; }

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> values_;
};

template <typename Real>
bool all_finite(std::span<const Real> v) {
  return std::all_of(v.begin(), v.end(),
                     [](Real x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

template <typename Real>
Matrix<Real> matmul(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: a.cols (" + std::to_string(a.cols()) +
                     ") != b.rows (" + std::to_string(b.rows()) + ")");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix<Real> c(m, n);
  // i-k-j: each c(i,j) still accumulates over k ascending.
  for (std::size_t i = 0; i < m; ++i) {
    Real* ci = c.row(i);
    const Real* ai = a.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = ai[p];
      const Real* bp = b.row(p);
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  count_matmul_flops(2ull * m * n * k);
  return c;
}

// a * b^T
template <typename Real>
Matrix<Real> matmul_transposed(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed: a.cols != b.cols");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Matrix<Real> c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const Real* ai = a.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const Real* bj = b.row(j);
      Real acc = Real(0);
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c(i, j) = acc;
    }
  }
  count_matmul_flops(2ull * m * n * k);
  return c;
}

template <typename Real>
void softmax_rows_inplace(Matrix<Real>& x) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Real* row = x.row(r);
    const std::size_t n = x.cols();
    if (n == 0) continue;
    Real mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    Real sum = Real(0);
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
  }
  count_flops(FlopCategory::kNormModulate, kSoftmaxFlopsPerElement * x.size());
}

template <typename Real>
Matrix<Real> softmax_rows(Matrix<Real> x) {
  softmax_rows_inplace(x);
  return x;
}

template <typename Real>
Matrix<Real> layer_norm(const Matrix<Real>& x, std::span<const Real> gamma,
                        std::span<const Real> beta, Real eps) {
  if (gamma.size() != x.cols() || beta.size() != x.cols()) {
    throw ShapeError("layer_norm: gamma/beta length must equal x.cols");
  }
  if (!(eps > Real(0))) throw ValidationError("layer_norm: eps must be > 0");
  const std::size_t n = x.cols();
  Matrix<Real> y(x.rows(), n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Real* xr = x.row(r);
    Real* yr = y.row(r);
    Real mean = Real(0);
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<Real>(n);
    Real var = Real(0);
    for (std::size_t j = 0; j < n; ++j) {
      const Real d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<Real>(n);
    const Real inv = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = (xr[j] - mean) * inv * gamma[j] + beta[j];
    }
  }
  count_flops(FlopCategory::kNormModulate, kLayerNormFlopsPerElement * x.size());
  return y;
}

template <typename Real>
Real gelu_scalar(Real x) {
  const Real k = static_cast<Real>(0.7978845608028654);  // sqrt(2/pi)
  return Real(0.5) * x *
         (Real(1) + std::tanh(k * (x + static_cast<Real>(0.044715) * x * x * x)));
}

template <typename Real>
Matrix<Real> gelu(Matrix<Real> x) {
  for (auto& v : x.values()) v = gelu_scalar(v);
  count_flops(FlopCategory::kNormModulate, kGeluFlopsPerElement * x.size());
  return x;
}

template <typename Real>
struct AttentionResult {
  Matrix<Real> out;
  std::optional<Matrix<Real>> scores;  // softmax-normalized probabilities
};

// out = softmax(q k^T / sqrt(d)) v. Score matmul and value matmul are charged
// to their own FLOP categories regardless of the caller's category.
template <typename Real>
AttentionResult<Real> scaled_dot_attention(const Matrix<Real>& q,
                                           const Matrix<Real>& k,
                                           const Matrix<Real>& v,
                                           bool capture_scores) {
  if (q.cols() != k.cols()) throw ShapeError("attention: q.cols != k.cols");
  if (k.rows() != v.rows()) throw ShapeError("attention: k.rows != v.rows");
  Matrix<Real> s;
  {
    FlopCategoryScope cat(FlopCategory::kScoreMatmul);
    s = matmul_transposed(q, k);
  }
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(q.cols()));
  for (auto& x : s.values()) x *= scale;
  count_flops(FlopCategory::kNormModulate,
              kScoreScaleFlopsPerElement * s.size());
  softmax_rows_inplace(s);
  AttentionResult<Real> res;
  {
    FlopCategoryScope cat(FlopCategory::kValueMatmul);
    res.out = matmul(s, v);
  }
  if (capture_scores) res.scores = std::move(s);
  return res;
}

// Replays cached probabilities against fresh values.
template <typename Real>
Matrix<Real> apply_scores(const Matrix<Real>& probs, const Matrix<Real>& v) {
  FlopCategoryScope cat(FlopCategory::kValueMatmul);
  return matmul(probs, v);
}

// ---------------------------------------------------------------------------
// RandomStream (splitmix64)
// ---------------------------------------------------------------------------

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t state() const { return state_; }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // [0, 1) with 53 bits of mantissa.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

inline std::vector<double> rng_uniform(RandomStream& stream, std::size_t n,
                                       double lo, double hi) {
  if (!(lo < hi)) throw ValidationError("rng_uniform: lo must be < hi");
  std::vector<double> out(n);
  for (auto& v : out) v = lo + (hi - lo) * stream.next_unit();
  return out;
}

// Box-Muller over consecutive uniform pairs; both outputs of a pair are used.
inline std::vector<double> rng_normal(RandomStream& stream, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; i += 2) {
    const double u1 = 1.0 - stream.next_unit();  // (0, 1]
    const double u2 = stream.next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    out[i] = r * std::cos(th);
    if (i + 1 < n) out[i + 1] = r * std::sin(th);
  }
  return out;
}

// FNV-1a over the raw bytes of a value array.
template <typename Real>
std::uint64_t digest(std::span<const Real> values) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  for (std::size_t i = 0; i < values.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string digest_hex(std::uint64_t h) {
  static const char* kHex = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[i] = kHex[h & 0xf];
  return s;
}

}  // namespace pab

#endif  // PAB_NUMERICS_HPP_
