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

#ifndef MESHNAS_SEARCH_SPACE_HPP_
#define MESHNAS_SEARCH_SPACE_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <gmpxx.h>

#include "meshnas/rng.hpp"

namespace meshnas {

/// Per-layer downsampling stride. Only (2,2), (2,1) and (1,1) exist; the
/// width is never reduced more than the height.
struct StridePair {
  int sh = 1;
  int sw = 1;

  bool operator==(const StridePair&) const = default;
  bool identity() const { return sh == 1 && sw == 1; }
};

/// The three admissible strides, in canonical order.
inline constexpr std::array<StridePair, 3> kStrideChoices{{{2, 2}, {2, 1}, {1, 1}}};

/// Index of a stride in kStrideChoices, or -1 if not admissible.
int stride_index(StridePair s);

/// Inverted-bottleneck convolution choice: kernel in {3,5}, expansion in {1,6}.
struct ConvChoice {
  int kernel = 3;
  int expansion = 1;

  bool operator==(const ConvChoice&) const = default;
};

/// All four convolution choices, in canonical order.
inline constexpr std::array<ConvChoice, 4> kAllConvChoices{
    {{3, 1}, {3, 6}, {5, 1}, {5, 6}}};

/// Four independent binary choices of a transformer layer. `true` always
/// selects the alternative structure, `false` the original one.
struct TransformerChoice {
  bool residual_attention = false;
  bool relative_embedding = false;
  bool drop_scaling = false;
  bool use_glu = false;

  bool operator==(const TransformerChoice&) const = default;

  /// Packs the four bits into [0,16): residual is the high bit, glu the low.
  int index() const {
    return (residual_attention ? 8 : 0) | (relative_embedding ? 4 : 0) |
           (drop_scaling ? 2 : 0) | (use_glu ? 1 : 0);
  }
  static TransformerChoice from_index(int idx) {
    return TransformerChoice{(idx & 8) != 0, (idx & 4) != 0, (idx & 2) != 0,
                             (idx & 1) != 0};
  }
  /// The canonical 4-character bit token, e.g. "0110".
  std::string token() const;
};

/// Search-space definition: layer counts, input/output geometry and channel
/// schedule. The optional stem is a fixed leading 2x2-stride layer that is
/// not part of the search.
struct SpaceConfig {
  int spatial_layers = 0;     // M
  int sequential_layers = 0;  // N
  int input_h = 0;
  int input_w = 0;
  int target_h = 0;
  int target_w = 0;
  int base_channels = 0;
  bool has_stem = false;

  /// Candidate convolution set. JSON configs always carry all four; tests
  /// may restrict this to shrink a space to enumerable size.
  std::vector<ConvChoice> conv_choices{kAllConvChoices.begin(),
                                       kAllConvChoices.end()};

  /// Geometry at the start of the searched path (after the stem, if any).
  int path_input_h() const { return has_stem ? input_h / 2 : input_h; }
  int path_input_w() const { return has_stem ? input_w / 2 : input_w; }

  /// Number of required (2,2) strides: log2 of the residual width factor.
  int n22() const;
  /// Number of required (2,1) strides.
  int n21() const;
  int num_slots() const { return n22() + n21(); }

  /// Throws ConfigError if the geometry or layer counts are inconsistent.
  void check() const;

  bool operator==(const SpaceConfig&) const = default;

  static SpaceConfig from_json(const std::string& text);
  static SpaceConfig from_json_file(const std::string& path);
  std::string to_json() const;
};

/// A full candidate: per-layer strides and convolution choices for the
/// spatial model, plus per-layer transformer choices for the sequential one.
struct Architecture {
  std::vector<StridePair> strides;
  std::vector<ConvChoice> ops;
  std::vector<TransformerChoice> seq;

  bool operator==(const Architecture&) const = default;
};

/// Feature-map size and channel count at one point of the network.
struct LayerGeometry {
  int h = 0;
  int w = 0;
  int channels = 0;

  bool operator==(const LayerGeometry&) const = default;
};

/// One named constraint violation from validate().
struct Violation {
  std::string constraint;
  std::string detail;
};

/// The multiset of non-identity strides every valid path must contain:
/// n22 copies of (2,2) followed by n21 copies of (2,1).
std::vector<StridePair> derive_slots(const SpaceConfig& config);

/// Number of valid downsampling paths, computed by the closed form
/// C(M, n22+n21) * C(n22+n21, n22).
mpz_class count_paths(const SpaceConfig& config);

/// Same count via the recursive backtracking over the resolution mesh.
/// Exponentially slower than count_paths; kept as an independent route.
mpz_class count_paths_backtracking(const SpaceConfig& config);

struct Cardinality {
  mpz_class paths;       // valid downsampling paths
  mpz_class spatial;     // paths * |O_c|^M
  mpz_class sequential;  // 16^N
  mpz_class total;       // spatial * sequential
};

Cardinality space_cardinality(const SpaceConfig& config);

/// Checks lengths, choice membership and the stride product constraint.
/// Returns an empty list iff the architecture is valid; never throws.
std::vector<Violation> validate(const Architecture& arch, const SpaceConfig& config);

inline bool is_valid(const Architecture& arch, const SpaceConfig& config) {
  return validate(arch, config).empty();
}

/// Geometry along the spatial model: entry [0] is the input of layer 1
/// (after the stem when present), entry i the output of layer i. Channels
/// stay at base_channels through the first height halving and double on
/// each subsequent one. Throws ConfigError if the architecture is invalid.
std::vector<LayerGeometry> derive_geometry(const Architecture& arch,
                                           const SpaceConfig& config);

/// Canonical string form: spatial tokens `MB<k>E<e>S<sh><sw>` joined by '-',
/// then '|', then the sequential 4-bit tokens joined by '-'.
std::string encode(const Architecture& arch);

/// Inverse of encode. Throws ParseError with the offending position.
Architecture decode(std::string_view text, const SpaceConfig& config);

/// Uniform sample over all valid downsampling paths, via the lattice DP.
std::vector<StridePair> uniform_path_sample(const SpaceConfig& config, Rng& rng);

/// Uniform sample over all architectures of the space.
Architecture uniform_architecture(const SpaceConfig& config, Rng& rng);

/// Yields every architecture exactly once, in a fixed deterministic order.
/// Refuses (ConfigError, reporting the cardinality) if the space is larger
/// than `cap`.
std::vector<Architecture> enumerate_architectures(const SpaceConfig& config,
                                                  std::uint64_t cap);

/// Streaming variant of enumerate_architectures; stops early if the callback
/// returns false.
void for_each_architecture(const SpaceConfig& config, std::uint64_t cap,
                           const std::function<bool(const Architecture&)>& fn);

/// DP over (layer, strides-used-so-far) states of the downsampling lattice.
/// Node identity is the pair (used22, used21), which is in bijection with
/// the feature-map resolution reached. All sampling is exactly uniform:
/// branch choices are proportional to integer completion counts.
class PathLattice {
 public:
  struct State {
    int used22 = 0;
    int used21 = 0;

    bool operator==(const State&) const = default;
  };

  explicit PathLattice(const SpaceConfig& config);

  int num_layers() const { return layers_; }
  int n22() const { return n22_; }
  int n21() const { return n21_; }

  /// True if a path can pass through `state` right before `layer` edges have
  /// been consumed, i.e. after `layer` layers.
  bool state_valid(int layer, State state) const;

  /// Number of ways to complete a path from (layer, state) to the target.
  std::uint64_t suffix_count(int layer, State state) const;
  /// Number of ways to reach (layer, state) from the start.
  std::uint64_t prefix_count(int layer, State state) const;

  std::uint64_t total_paths() const { return suffix_count(0, State{}); }

  /// Geometry entering layer `layer` (0-based) at `state`.
  LayerGeometry geometry_at(int layer, State state) const;

  /// The state reached after applying `strides` from the start.
  State state_after(const std::vector<StridePair>& strides) const;

  /// Uniform over all complete paths.
  std::vector<StridePair> sample_path(Rng& rng) const;

  /// Uniform over all prefixes of length `layer` that end at `state`.
  /// Throws ConfigError if no such prefix exists.
  std::vector<StridePair> sample_prefix_to(int layer, State state, Rng& rng) const;

  /// Uniform over all stride segments spanning layers [lo, hi) that start at
  /// any valid entry state; returns the entry state through `entry_out`.
  std::vector<StridePair> sample_segment(int lo, int hi, Rng& rng,
                                         State* entry_out) const;

  /// Number of segments spanning [lo, hi) that start at `entry`.
  std::uint64_t segment_count(int lo, int hi, State entry) const;

  /// All states valid at the given layer boundary.
  std::vector<State> states_at(int layer) const;

 private:
  std::uint64_t& suffix_ref(int layer, State state);
  std::uint64_t& prefix_ref(int layer, State state);
  int state_id(State state) const { return state.used22 * (n21_ + 1) + state.used21; }

  int layers_ = 0;
  int n22_ = 0;
  int n21_ = 0;
  int h0_ = 0, w0_ = 0, base_channels_ = 0;
  // Dense (layers+1) x (n22+1)*(n21+1) tables; counts fit comfortably in
  // 64 bits for any space this engine samples (overflow is checked).
  std::vector<std::uint64_t> suffix_;
  std::vector<std::uint64_t> prefix_;
};

/// Channel count entering a layer whose height has been halved `halvings`
/// times since the start of the searched path.
int channels_after_halvings(int base_channels, int halvings);

}  // namespace meshnas

#endif  // MESHNAS_SEARCH_SPACE_HPP_
