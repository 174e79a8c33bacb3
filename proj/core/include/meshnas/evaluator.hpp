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

#ifndef MESHNAS_EVALUATOR_HPP_
#define MESHNAS_EVALUATOR_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "meshnas/rng.hpp"
#include "meshnas/search_space.hpp"

namespace meshnas {

/// A leading piece of an architecture: spatial layers [0, strides.size()),
/// optionally followed by the full sequential model. Always anchored at the
/// path input.
struct PartialArchitecture {
  std::vector<StridePair> strides;
  std::vector<ConvChoice> ops;
  std::vector<TransformerChoice> seq;

  static PartialArchitecture from(const Architecture& arch) {
    return PartialArchitecture{arch.strides, arch.ops, arch.seq};
  }
  Architecture to_architecture() const { return Architecture{strides, ops, seq}; }

  int spatial_count() const { return static_cast<int>(strides.size()); }
};

/// Source of per-edge training signals for supernet training. The block
/// argument selects the additive bias emulating the auxiliary neck attached
/// while that block trains; a negative block means no neck (whole-network
/// training).
class TrainOracle {
 public:
  virtual ~TrainOracle() = default;

  /// One signal per edge of `partial`, spatial layers first then sequential
  /// layers, in layer order.
  virtual std::vector<double> edge_signals(const PartialArchitecture& partial,
                                           int block, Rng& rng) const = 0;

  virtual double block_bias(int block) const = 0;
};

/// Deterministic benchmark with known ground truth. Every hidden constant is
/// hash-derived from the seed, so the same seed always defines the same
/// problem instance. Per-layer edge qualities are drawn from U(-1/2, 1/2);
/// adjacent layers are coupled through pair terms so the optimum is not
/// purely greedy; the raw sum is squashed through the logistic so quality
/// lands in (0, 1).
class SyntheticBenchmark : public TrainOracle {
 public:
  struct Params {
    std::uint64_t seed = 0;
    double interaction_weight = 0.1;
    double noise_sigma = 0.05;
  };

  SyntheticBenchmark(SpaceConfig config, Params params);

  const SpaceConfig& config() const { return config_; }
  const Params& params() const { return params_; }

  /// Quality of a spatial edge: layer (0-based), the geometry state entering
  /// it, and the stride/op choice taken.
  double edge_quality_spatial(int layer, int used22, int used21, StridePair s,
                              ConvChoice op) const;
  /// Quality of a sequential edge (0-based sequential layer).
  double edge_quality_seq(int layer, TransformerChoice c) const;

  /// Pre-squash sum of edge qualities and weighted pair terms.
  double raw_quality(const Architecture& arch) const;

  /// Ground truth in (0, 1); deterministic, invariant under re-evaluation.
  double true_quality(const Architecture& arch) const;

  /// Sum of the partial path's edge qualities (no pair terms, no squash).
  double edge_sum(const PartialArchitecture& partial) const;

  /// Scalar validation-style signal: edge_sum + block bias + N(0, sigma).
  double train_signal(const PartialArchitecture& partial, int block, Rng& rng) const;

  std::vector<double> edge_signals(const PartialArchitecture& partial, int block,
                                   Rng& rng) const override;

  /// Auxiliary-neck bias of a block, drawn once from U(-0.1, 0.1); zero for
  /// negative blocks.
  double block_bias(int block) const override;

  static double squash(double raw) { return 1.0 / (1.0 + std::exp(-raw)); }

 private:
  double pair_term(int left_layer, std::uint64_t left_code,
                   std::uint64_t right_code) const;
  /// Entry states (used22, used21) per spatial layer; throws ConfigError if
  /// the partial walks outside the lattice.
  std::vector<std::pair<int, int>> entry_states(const PartialArchitecture& partial) const;

  SpaceConfig config_;
  Params params_;
};

/// Additive latency model: per-(operator, input geometry) costs plus a
/// constant head cost. Keys are operator tokens: "MB<k>E<e>" for spatial
/// layers, "TR<bits>" for transformer layers, "STEM" for the fixed stem.
class LatencyTable {
 public:
  struct Key {
    std::string op;
    int h = 0;
    int w = 0;
    int channels = 0;

    auto operator<=>(const Key&) const = default;
  };

  double head_cost_ms = 0.0;

  void set(const Key& key, double ms);
  bool contains(const Key& key) const { return entries_.count(key) > 0; }
  /// Throws ConfigError naming the key when the entry is missing.
  double cost(const Key& key) const;
  std::size_t size() const { return entries_.size(); }
  const std::map<Key, double>& entries() const { return entries_; }

  /// CSV with header `op,h,w,channels,ms`; the head cost is the HEAD,0,0,0 row.
  std::string to_csv() const;
  static LatencyTable from_csv(const std::string& text);
  void save_csv(const std::string& path) const;
  static LatencyTable load_csv(const std::string& path);

  /// Builds a table covering every (operator, geometry) pair of the space.
  /// MBConv cost is proportional to kernel^2 * expansion * h * w * channels;
  /// transformer cost grows with relative embedding and GLU and shrinks
  /// marginally when scaling is dropped. Entry scales are jittered +/-10%
  /// per operator token from the seed.
  static LatencyTable synthesize(const SpaceConfig& config, std::uint64_t seed);

 private:
  std::map<Key, double> entries_;
};

std::string op_token(ConvChoice op);
std::string op_token(TransformerChoice c);

/// Sum of per-layer costs plus the head cost. Works for any stride/op lists
/// of equal length; every (operator, geometry) pair must be in the table.
double latency_ms(const PartialArchitecture& partial, const SpaceConfig& config,
                  const LatencyTable& table);
double latency_ms(const Architecture& arch, const SpaceConfig& config,
                  const LatencyTable& table);

}  // namespace meshnas

#endif  // MESHNAS_EVALUATOR_HPP_
