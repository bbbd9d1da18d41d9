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

#ifndef PAB_TENSOR_HPP_
#define PAB_TENSOR_HPP_

#include <cstdint>
#include <vector>

#include "pab/error.hpp"
#include "pab/numerics.hpp"

namespace pab {

// Video latent: per batch element a (frames * tokens) x channels matrix,
// rows ordered frame-major (row = frame * tokens + token).
template <typename Real>
struct Latent {
  std::size_t frames = 0;
  std::size_t tokens = 0;
  std::size_t channels = 0;
  std::vector<Matrix<Real>> batch;

  Latent() = default;
  Latent(std::size_t b, std::size_t t, std::size_t s, std::size_t d)
      : frames(t), tokens(s), channels(d), batch(b, Matrix<Real>(t * s, d)) {}

  std::size_t batch_size() const { return batch.size(); }
  std::size_t element_count() const {
    return batch.size() * frames * tokens * channels;
  }
  bool same_shape(const Latent& o) const {
    return frames == o.frames && tokens == o.tokens &&
           channels == o.channels && batch.size() == o.batch.size();
  }

  Real& at(std::size_t b, std::size_t t, std::size_t s, std::size_t d) {
    return batch[b](t * tokens + s, d);
  }
  Real at(std::size_t b, std::size_t t, std::size_t s, std::size_t d) const {
    return batch[b](t * tokens + s, d);
  }

  std::vector<Real> flatten() const {
    std::vector<Real> out;
    out.reserve(element_count());
    for (const auto& m : batch) {
      out.insert(out.end(), m.storage().begin(), m.storage().end());
    }
    return out;
  }

  std::uint64_t digest() const {
    const auto flat = flatten();
    return pab::digest<Real>(flat);
  }

  template <typename Other>
  Latent<Other> cast() const {
    Latent<Other> out(batch.size(), frames, tokens, channels);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& src = batch[b].storage();
      auto& dst = out.batch[b].storage();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<Other>(src[i]);
    }
    return out;
  }

  bool operator==(const Latent&) const = default;
};

template <typename Real>
void add_inplace(Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("add: shape mismatch");
  }
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
}

template <typename Real>
Matrix<Real> subtract(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("subtract: shape mismatch");
  }
  Matrix<Real> c = a;
  auto cv = c.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] -= bv[i];
  return c;
}

// Draws a latent of standard normals in (batch, frame, token, channel) order.
template <typename Real>
Latent<Real> gaussian_latent(RandomStream& rng, std::size_t b, std::size_t t,
                             std::size_t s, std::size_t d) {
  Latent<Real> x(b, t, s, d);
  const auto values = rng_normal(rng, x.element_count());
  std::size_t i = 0;
  for (auto& m : x.batch) {
    for (auto& v : m.values()) v = static_cast<Real>(values[i++]);
  }
  return x;
}

}  // namespace pab

#endif  // PAB_TENSOR_HPP_
