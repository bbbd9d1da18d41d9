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

#ifndef PAB_DECISION_HPP_
#define PAB_DECISION_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "pab/error.hpp"
#include "pab/model_config.hpp"

namespace pab {

struct Decision {
  bool reuse = false;
  int source = -1;  // step whose computed output is replayed

  static constexpr Decision compute() { return {}; }
  static constexpr Decision reuse_from(int step) { return {true, step}; }

  bool operator==(const Decision&) const = default;
};

// Dense (step, layer, kind) -> Compute | Reuse(source). A second per
// (step, layer) grid carries whole-block residual reuse; when a block is
// reused its kind cells are not executed.
class DecisionTable {
 public:
  DecisionTable() = default;
  DecisionTable(std::size_t steps, std::size_t layers)
      : steps_(steps),
        layers_(layers),
        kinds_(steps * layers * kNumKinds),
        blocks_(steps * layers) {}

  std::size_t steps() const { return steps_; }
  std::size_t layers() const { return layers_; }

  Decision at(std::size_t step, std::size_t layer, ComponentKind k) const {
    return kinds_[index(step, layer, k)];
  }
  void set(std::size_t step, std::size_t layer, ComponentKind k, Decision d) {
    kinds_[index(step, layer, k)] = d;
  }
  // Same decision for every layer.
  void set_all_layers(std::size_t step, ComponentKind k, Decision d) {
    for (std::size_t l = 0; l < layers_; ++l) set(step, l, k, d);
  }

  Decision block(std::size_t step, std::size_t layer) const {
    check(step, layer);
    return blocks_[step * layers_ + layer];
  }
  void set_block(std::size_t step, std::size_t layer, Decision d) {
    check(step, layer);
    blocks_[step * layers_ + layer] = d;
  }

  // True when the kind is actually executed (not reused, not skipped by a
  // reused block) at this cell.
  bool computes(std::size_t step, std::size_t layer, ComponentKind k) const {
    return !block(step, layer).reuse && !at(step, layer, k).reuse;
  }

  // True when a later step replays the output computed at `step`.
  bool referenced(std::size_t step, std::size_t layer, ComponentKind k) const {
    for (std::size_t s = step + 1; s < steps_; ++s) {
      const Decision d = at(s, layer, k);
      if (d.reuse && d.source == static_cast<int>(step)) return true;
    }
    return false;
  }
  bool block_referenced(std::size_t step, std::size_t layer) const {
    for (std::size_t s = step + 1; s < steps_; ++s) {
      const Decision d = block(s, layer);
      if (d.reuse && d.source == static_cast<int>(step)) return true;
    }
    return false;
  }

  bool all_compute() const {
    for (const auto& d : kinds_) if (d.reuse) return false;
    for (const auto& d : blocks_) if (d.reuse) return false;
    return true;
  }

  std::size_t reuse_count() const {
    std::size_t n = 0;
    for (const auto& d : kinds_) n += d.reuse;
    for (const auto& d : blocks_) n += d.reuse;
    return n;
  }

  // Steps at which the kind is computed (checked at layer 0).
  std::vector<std::size_t> compute_steps(ComponentKind k,
                                         std::size_t layer = 0) const {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < steps_; ++s) {
      if (computes(s, layer, k)) out.push_back(s);
    }
    return out;
  }

  // Structural invariants: every Reuse source precedes its step and was
  // computed there; step 0 computes everything.
  void validate() const {
    for (std::size_t s = 0; s < steps_; ++s) {
      for (std::size_t l = 0; l < layers_; ++l) {
        const Decision b = block(s, l);
        if (b.reuse) {
          if (b.source < 0 || static_cast<std::size_t>(b.source) >= s) {
            throw PolicyError(cell("block", s, l) + ": source must precede step");
          }
          if (block(b.source, l).reuse) {
            throw PolicyError(cell("block", s, l) + ": source is not computed");
          }
        }
        for (auto k : kAllKinds) {
          const Decision d = at(s, l, k);
          if (!d.reuse) continue;
          if (d.source < 0 || static_cast<std::size_t>(d.source) >= s) {
            throw PolicyError(cell(kind_name(k), s, l) +
                              ": source must precede step");
          }
          if (!computes(d.source, l, k)) {
            throw PolicyError(cell(kind_name(k), s, l) +
                              ": source is not computed");
          }
        }
      }
    }
  }

  bool operator==(const DecisionTable&) const = default;

 private:
  void check(std::size_t step, std::size_t layer) const {
    if (step >= steps_ || layer >= layers_) {
      throw ShapeError("decision table index out of range");
    }
  }
  std::size_t index(std::size_t step, std::size_t layer, ComponentKind k) const {
    check(step, layer);
    return (step * layers_ + layer) * kNumKinds + static_cast<int>(k);
  }
  static std::string cell(const std::string& what, std::size_t s,
                          std::size_t l) {
    return what + "[step " + std::to_string(s) + ", layer " +
           std::to_string(l) + "]";
  }

  std::size_t steps_ = 0;
  std::size_t layers_ = 0;
  std::vector<Decision> kinds_;
  std::vector<Decision> blocks_;
};

}  // namespace pab

#endif  // PAB_DECISION_HPP_
