// Copyright 2026 The meshnas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MESHNAS_ERROR_HPP_
#define MESHNAS_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace meshnas {

/// Invalid or inconsistent search-space / run configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed architecture string or serialized artifact.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " (at position " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// External evaluator protocol failure: timeout, malformed line, dead child.
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

/// Sampling from a distribution that cannot produce a valid architecture.
class DegenerateDistributionError : public std::runtime_error {
 public:
  explicit DegenerateDistributionError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Supernet store misuse, e.g. evaluating through untrained blocks.
class StoreError : public std::runtime_error {
 public:
  explicit StoreError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace meshnas

#endif  // MESHNAS_ERROR_HPP_
