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

#ifndef PAB_CACHE_HPP_
#define PAB_CACHE_HPP_

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pab/error.hpp"
#include "pab/model_config.hpp"
#include "pab/numerics.hpp"

namespace pab {

// Slot 0..5 are the Site values; kBlockDeltaSlot holds a whole layer-pair
// residual delta.
inline constexpr int kBlockDeltaSlot = kNumSites;

struct CacheKey {
  std::size_t layer = 0;
  int slot = 0;

  static CacheKey site(std::size_t layer, Site s) {
    return {layer, static_cast<int>(s)};
  }
  static CacheKey block(std::size_t layer) { return {layer, kBlockDeltaSlot}; }

  auto operator<=>(const CacheKey&) const = default;
};

template <typename Real>
struct CacheEntry {
  int source_step = -1;
  std::vector<Matrix<Real>> outputs;                // one per batch element
  std::vector<std::vector<Matrix<Real>>> scores;    // [batch][group * heads + head]

  bool has_scores() const { return !scores.empty(); }

  std::size_t bytes() const {
    std::size_t n = 0;
    for (const auto& m : outputs) n += m.size();
    for (const auto& per_batch : scores) {
      for (const auto& m : per_batch) n += m.size();
    }
    return n * sizeof(Real);
  }
};

// At most one live entry per site; a store replaces the previous entry.
template <typename Real>
class CacheStore {
 public:
  void store(const CacheKey& key, CacheEntry<Real> entry) {
    entries_[key] = std::move(entry);
  }

  // Returns the entry for `key`, which must have been stored at
  // `source_step`.
  const CacheEntry<Real>& fetch(const CacheKey& key, int source_step) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      throw PolicyError("cache fetch before store: layer " +
                        std::to_string(key.layer) + ", slot " +
                        std::to_string(key.slot));
    }
    if (it->second.source_step != source_step) {
      throw PolicyError("cache holds step " +
                        std::to_string(it->second.source_step) +
                        " but step " + std::to_string(source_step) +
                        " was requested (layer " + std::to_string(key.layer) +
                        ")");
    }
    return it->second;
  }

  bool contains(const CacheKey& key) const { return entries_.count(key) != 0; }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  std::size_t live_bytes() const {
    std::size_t n = 0;
    for (const auto& [k, e] : entries_) n += e.bytes();
    return n;
  }

  const std::map<CacheKey, CacheEntry<Real>>& entries() const {
    return entries_;
  }

 private:
  std::map<CacheKey, CacheEntry<Real>> entries_;
};

}  // namespace pab

#endif  // PAB_CACHE_HPP_
