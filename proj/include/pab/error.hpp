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

#ifndef PAB_ERROR_HPP_
#define PAB_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace pab {

// Base error. `kind()` is a stable machine-readable tag surfaced by the CLI.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message)
      : Error("shape-mismatch", message) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message,
                           std::string kind = "validation")
      : Error(std::move(kind), message) {}
};

// Raised when a decision table asks for something the cache cannot supply.
class PolicyError : public Error {
 public:
  explicit PolicyError(const std::string& message)
      : Error("policy", message) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& message)
      : Error("undefined-metric", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message,
                   std::string kind = "missing-artifact")
      : Error(std::move(kind), message) {}
};

}  // namespace pab

#endif  // PAB_ERROR_HPP_
