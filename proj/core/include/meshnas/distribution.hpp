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

#ifndef MESHNAS_DISTRIBUTION_HPP_
#define MESHNAS_DISTRIBUTION_HPP_

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "meshnas/rng.hpp"
#include "meshnas/search_space.hpp"

namespace meshnas {

/// Categorical variable over n_c categories in natural parameters: eta has
/// n_c - 1 entries, the last category's logit is implicitly 0, so
///   p_j = exp(eta_j) / (1 + sum_i exp(eta_i))   for j < n_c - 1,
///   p_last = 1 / (1 + sum_i exp(eta_i)).
/// The parameterization is unconstrained: any finite eta is a valid interior
/// point of the simplex.
struct CategoricalNat {
  Eigen::VectorXd eta;

  explicit CategoricalNat(int n_c) : eta(Eigen::VectorXd::Zero(n_c - 1)) {}
  CategoricalNat() = default;

  int num_categories() const { return static_cast<int>(eta.size()) + 1; }
};

/// Full simplex vector of a decision; guarded against overflow, never NaN
/// for finite eta.
Eigen::VectorXd probs(const CategoricalNat& d);

/// log p(category); category is 0-based.
double log_prob(const CategoricalNat& d, int category);

/// Draw a category (0-based).
int sample_category(const CategoricalNat& d, Rng& rng);

/// Block-diagonal symmetric matrix with one block per decision.
struct BlockDiagMatrix {
  std::vector<Eigen::MatrixXd> blocks;

  int dim() const;
  Eigen::MatrixXd dense() const;
  /// Solves (B + damping I) x = rhs block by block via LDLT.
  Eigen::VectorXd solve_damped(const Eigen::VectorXd& rhs, double damping) const;
};

/// Factored distribution over architectures: one categorical per convolution
/// layer (n_c = |O_c|), one per non-identity stride slot (n_c = M, the slot's
/// layer position, (2,2) slots first), and one per transformer layer bit
/// (n_c = 2, category 1 = alternative chosen).
///
/// Stride positions are rejection-sampled: draws where two slots collide are
/// discarded. Log-probabilities, scores and Fisher blocks use the
/// unnormalized pre-rejection factorization, with slot categories read off an
/// architecture by assigning each stride type's sorted positions to its slots
/// in order.
///
/// Flat vector order for gradients and Fisher blocks: convolution decisions
/// by layer, then slot decisions by slot index, then transformer decisions by
/// layer then bit (residual, relative, drop-scaling, glu).
class ArchDistribution {
 public:
  ArchDistribution() = default;

  static ArchDistribution uniform(const SpaceConfig& config);

  const SpaceConfig& config() const { return config_; }

  int num_decisions() const { return static_cast<int>(decisions_.size()); }
  const CategoricalNat& decision(int i) const { return decisions_[i]; }
  CategoricalNat& decision(int i) { return decisions_[i]; }

  int num_op_decisions() const { return config_.spatial_layers; }
  int num_slot_decisions() const { return config_.num_slots(); }
  int num_seq_decisions() const { return config_.sequential_layers * 4; }

  const CategoricalNat& op_decision(int layer) const { return decisions_[layer]; }
  const CategoricalNat& slot_decision(int slot) const {
    return decisions_[config_.spatial_layers + slot];
  }
  const CategoricalNat& seq_decision(int layer, int bit) const {
    return decisions_[config_.spatial_layers + config_.num_slots() + layer * 4 + bit];
  }

  /// Total natural-parameter dimension, sum of (n_c - 1) over decisions.
  int dim() const;

  /// Serialization id of a decision: "op:<layer>", "slot:<index>" or
  /// "seq:<layer>:<bit>".
  std::string decision_id(int i) const;

  /// Observed category of every decision for a valid architecture.
  /// Throws ConfigError if the architecture does not fit the space.
  std::vector<int> observed_categories(const Architecture& arch) const;

  /// Draws an architecture; resamples stride slots on positional collision.
  /// Throws DegenerateDistributionError after 10^4 rejected attempts.
  Architecture sample(Rng& rng) const;

  double log_prob(const Architecture& arch) const;

  /// Score function: per decision T(y) - p_minus, concatenated flat.
  Eigen::VectorXd grad_log_prob(const Architecture& arch) const;

  std::string to_json() const;
  static ArchDistribution from_json(const SpaceConfig& config, const std::string& text);

 private:
  SpaceConfig config_;
  std::vector<CategoricalNat> decisions_;
};

/// Exact Fisher information of the factored family: per decision
/// diag(p_minus) - p_minus p_minus^T.
BlockDiagMatrix fisher_analytic(const ArchDistribution& dist);

/// Running average of score outer products over the given samples,
/// F <- (j F + g g^T) / (j + 1).
Eigen::MatrixXd fisher_empirical(const ArchDistribution& dist,
                                 std::span<const Architecture> samples);

/// Convenience: draws `num_samples` architectures internally.
Eigen::MatrixXd fisher_empirical(const ArchDistribution& dist, int num_samples,
                                 Rng& rng);

}  // namespace meshnas

#endif  // MESHNAS_DISTRIBUTION_HPP_
