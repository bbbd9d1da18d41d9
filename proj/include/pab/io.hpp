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

// Binary tensor dumps:
//   "PABT" | u32 version (1) | u32 ndim | u64 dims[ndim] | f32 payload
// All integers and floats little-endian, payload row-major.

#ifndef PAB_IO_HPP_
#define PAB_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "pab/error.hpp"
#include "pab/tensor.hpp"

namespace pab {

inline constexpr char kDumpMagic[4] = {'P', 'A', 'B', 'T'};
inline constexpr std::uint32_t kDumpVersion = 1;

struct TensorDump {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }
  bool operator==(const TensorDump&) const = default;
};

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw IoError("truncated tensor dump", "corrupt-artifact");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(U);
  return v;
}

}  // namespace detail

inline std::string encode_dump(const TensorDump& t) {
  if (t.values.size() != t.element_count()) {
    throw ShapeError("tensor dump payload does not match its dims");
  }
  std::string out(kDumpMagic, 4);
  detail::put_le<std::uint32_t>(out, kDumpVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) detail::put_le<std::uint64_t>(out, d);
  for (float f : t.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

inline TensorDump decode_dump(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kDumpMagic, 4) != 0) {
    throw IoError("not a tensor dump (bad magic)", "corrupt-artifact");
  }
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kDumpVersion) {
    throw IoError("unsupported tensor dump version " + std::to_string(version),
                  "corrupt-artifact");
  }
  TensorDump t;
  const auto ndim = detail::get_le<std::uint32_t>(bytes, pos);
  for (std::uint32_t i = 0; i < ndim; ++i) t.dims.push_back(detail::get_le<std::uint64_t>(bytes, pos));
  const std::uint64_t n = t.element_count();
  if (bytes.size() - pos != n * 4) {
    throw IoError("tensor dump payload length does not match dims", "corrupt-artifact");
  }
  t.values.resize(n);
  for (auto& f : t.values) f = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, pos));
  return t;
}

inline void write_dump(const std::filesystem::path& path, const TensorDump& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string(), "io");
  const std::string bytes = encode_dump(t);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for " + path.string(), "io");
}

inline TensorDump read_dump(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("missing tensor dump " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_dump(bytes);
}

// Dims are [B, T, S, D].
template <typename Real>
TensorDump to_dump(const Latent<Real>& x) {
  TensorDump t;
  t.dims = {x.batch_size(), x.frames, x.tokens, x.channels};
  t.values.reserve(x.element_count());
  for (const auto& m : x.batch) {
    for (Real v : m.values()) t.values.push_back(static_cast<float>(v));
  }
  return t;
}

template <typename Real>
Latent<Real> from_dump(const TensorDump& t) {
  if (t.dims.size() != 4) throw ShapeError("latent dumps have four dims");
  Latent<Real> x(t.dims[0], t.dims[1], t.dims[2], t.dims[3]);
  std::size_t i = 0;
  for (auto& m : x.batch) {
    for (auto& v : m.values()) v = static_cast<Real>(t.values[i++]);
  }
  return x;
}

}  // namespace pab

#endif  // PAB_IO_HPP_
