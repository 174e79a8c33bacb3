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

#ifndef MESHNAS_SUPERNET_HPP_
#define MESHNAS_SUPERNET_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "meshnas/evaluator.hpp"
#include "meshnas/rng.hpp"
#include "meshnas/search_space.hpp"

namespace meshnas {

/// K blocks: K-1 equal contiguous spatial layer ranges plus the whole
/// sequential model as the last block.
struct BlockPartition {
  int num_blocks = 0;                               // K
  std::vector<std::pair<int, int>> spatial_ranges;  // K-1 half-open ranges

  /// Throws ConfigError naming the valid choices when M % (K-1) != 0.
  static BlockPartition make(const SpaceConfig& config, int num_blocks);

  int sequential_block() const { return num_blocks - 1; }
  int block_of_spatial_layer(int layer) const;

  bool operator==(const BlockPartition&) const = default;
};

enum class TrainStrategy { kRandomPath, kBestPath, kCoUpdate, kSpos };

std::string strategy_name(TrainStrategy s);
TrainStrategy parse_strategy(const std::string& name);

/// Quality score and visit count of one supernet edge.
struct EdgeStats {
  double score = 0.0;
  std::uint64_t visits = 0;

  bool operator==(const EdgeStats&) const = default;
};

/// Spatial edge address: layer, the lattice state entering it, and the
/// stride/op choice taken. Ordered so that serialization is deterministic.
struct SpatialEdgeKey {
  int layer = 0;
  int used22 = 0;
  int used21 = 0;
  int stride_idx = 0;  // index into kStrideChoices
  int op_idx = 0;      // index into config.conv_choices

  auto operator<=>(const SpatialEdgeKey&) const = default;
};

/// Sequential edge address: transformer layer and the full 4-bit choice.
struct SeqEdgeKey {
  int layer = 0;
  int choice = 0;  // TransformerChoice::index()

  auto operator<=>(const SeqEdgeKey&) const = default;
};

/// One path through a single block: entry state plus the block's choices.
/// Spatial blocks carry strides/ops; the sequential block carries seq.
struct BlockPath {
  PathLattice::State entry;
  std::vector<StridePair> strides;
  std::vector<ConvChoice> ops;
  std::vector<TransformerChoice> seq;
};

/// Best (partial path, perf) seen per output state of a block.
struct LookupEntry {
  BlockPath path;
  double perf = 0.0;
};

/// Block-partitioned store of per-edge quality scores standing in for shared
/// supernet weights. Scores move toward the training oracle's per-edge
/// signals by EMA; more visits mean lower estimation error. Blocks train in
/// order and freeze afterwards.
class SupernetStore {
 public:
  SupernetStore() = default;
  SupernetStore(SpaceConfig config, BlockPartition partition, double ema_rate = 0.05);

  const SpaceConfig& config() const { return config_; }
  const BlockPartition& partition() const { return partition_; }
  const PathLattice& lattice() const { return *lattice_; }
  double ema_rate() const { return ema_rate_; }

  bool block_trained(int block) const { return blocks_[block].trained; }
  bool all_trained() const;
  double block_bias_applied(int block) const { return blocks_[block].bias_applied; }
  std::uint64_t block_iterations(int block) const { return blocks_[block].iterations; }
  bool aborted() const { return aborted_; }
  const std::string& strategy() const { return strategy_; }

  const EdgeStats* find(const SpatialEdgeKey& key) const;
  const EdgeStats* find(const SeqEdgeKey& key) const;
  const std::map<SpatialEdgeKey, EdgeStats>& spatial_edges() const {
    return spatial_edges_;
  }
  const std::map<SeqEdgeKey, EdgeStats>& seq_edges() const { return seq_edges_; }

  /// Every edge of a block reachable in the mesh (visited or not).
  std::vector<SpatialEdgeKey> spatial_edge_universe(int block) const;
  std::vector<SeqEdgeKey> seq_edge_universe() const;

  /// The lookup table built for a block by the best-path strategy, keyed by
  /// exit state id (used22 * (n21+1) + used21).
  const std::map<int, LookupEntry>* lookup(int block) const;

  /// One-shot estimate of a full architecture: the logistic of the sum of
  /// per-edge scores with each block's training bias removed. Deterministic
  /// given the store. Throws StoreError when a touched block is untrained.
  double oneshot_eval(const Architecture& arch) const;

  /// Same aggregation over a partial path; used to score prefixes.
  double partial_score(const PartialArchitecture& partial) const;

  std::string to_json() const;
  static SupernetStore from_json(const std::string& text);
  void save(const std::string& path) const;
  static SupernetStore load(const std::string& path);

  static std::string edge_id(const SpatialEdgeKey& key);
  static std::string edge_id(const SeqEdgeKey& key);

 private:
  friend void train_progressive(SupernetStore&, TrainStrategy, const TrainOracle&,
                                int, Rng&, int);
  friend void build_lookup(SupernetStore&, int, int);

  struct BlockState {
    bool trained = false;
    double bias_applied = 0.0;
    std::uint64_t iterations = 0;
  };

  EdgeStats& stats(const SpatialEdgeKey& key) { return spatial_edges_[key]; }
  EdgeStats& stats(const SeqEdgeKey& key) { return seq_edges_[key]; }
  void update_edge(EdgeStats& stats, double signal);

  SpaceConfig config_;
  BlockPartition partition_;
  std::optional<PathLattice> lattice_;
  double ema_rate_ = 0.05;
  std::string strategy_;
  bool aborted_ = false;
  std::vector<BlockState> blocks_;
  std::map<SpatialEdgeKey, EdgeStats> spatial_edges_;
  std::map<SeqEdgeKey, EdgeStats> seq_edges_;
  std::vector<std::map<int, LookupEntry>> lookups_;
};

/// Uniform block path: spatial blocks draw a (entry state, stride segment)
/// pair uniformly with ops uniform per layer; the sequential block draws each
/// transformer layer uniformly.
BlockPath sample_block_path(const SupernetStore& store, int block, Rng& rng);

/// Uniform prefix through blocks before `block` whose exit state equals
/// `entry`; ops uniform. Throws ConfigError when the state is unreachable.
PartialArchitecture sample_prefix(const SupernetStore& store, int block,
                                  PathLattice::State entry, Rng& rng);

/// Greedy backward walk over the built lookups: at each earlier block pick
/// the stored entry whose exit state matches the downstream input state.
/// Throws StoreError when a compatible entry is missing.
PartialArchitecture best_prefix(const SupernetStore& store, int block,
                                const BlockPath& block_path);

/// Scans up to `cap` block paths in a fixed order and records the best
/// (path, perf) per output state, scoring each with the store behind the
/// best compatible prefix.
void build_lookup(SupernetStore& store, int block, int cap);

/// Trains every block for `iterations_per_block` iterations in order
/// (strategies random_path / best_path / co_update), or the whole net for
/// K * iterations_per_block uniform path samples (spos). Earlier blocks
/// freeze once trained; co_update keeps updating prefix edges. Resumes from
/// the first unfinished block. If the oracle throws, the store is flagged
/// aborted and the error propagates.
void train_progressive(SupernetStore& store, TrainStrategy strategy,
                       const TrainOracle& oracle, int iterations_per_block,
                       Rng& rng, int lookup_cap = 1000);

}  // namespace meshnas

#endif  // MESHNAS_SUPERNET_HPP_
