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

#include "meshnas/distribution.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "meshnas/error.hpp"

namespace meshnas {

namespace {

constexpr int kMaxRejectionAttempts = 10000;

// log(1 + sum_i exp(eta_i)) with max-subtraction; the implicit last logit is 0.
double log_partition(const Eigen::VectorXd& eta) {
  double m = 0.0;  // the implicit last logit
  for (int i = 0; i < eta.size(); ++i) m = std::max(m, eta[i]);
  double sum = std::exp(-m);
  for (int i = 0; i < eta.size(); ++i) sum += std::exp(eta[i] - m);
  return m + std::log(sum);
}

}  // namespace

Eigen::VectorXd probs(const CategoricalNat& d) {
  const int n = d.num_categories();
  const double phi = log_partition(d.eta);
  Eigen::VectorXd p(n);
  for (int j = 0; j < n - 1; ++j) p[j] = std::exp(d.eta[j] - phi);
  p[n - 1] = std::exp(-phi);
  return p;
}

double log_prob(const CategoricalNat& d, int category) {
  const double phi = log_partition(d.eta);
  const double logit = category < d.eta.size() ? d.eta[category] : 0.0;
  return logit - phi;
}

int sample_category(const CategoricalNat& d, Rng& rng) {
  const Eigen::VectorXd p = probs(d);
  const double u = rng.uniform01();
  double acc = 0.0;
  for (int j = 0; j < p.size(); ++j) {
    acc += p[j];
    if (u < acc) return j;
  }
  return static_cast<int>(p.size()) - 1;
}

int BlockDiagMatrix::dim() const {
  int n = 0;
  for (const auto& b : blocks) n += static_cast<int>(b.rows());
  return n;
}

Eigen::MatrixXd BlockDiagMatrix::dense() const {
  const int n = dim();
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, n);
  int off = 0;
  for (const auto& b : blocks) {
    full.block(off, off, b.rows(), b.cols()) = b;
    off += static_cast<int>(b.rows());
  }
  return full;
}

Eigen::VectorXd BlockDiagMatrix::solve_damped(const Eigen::VectorXd& rhs,
                                              double damping) const {
  Eigen::VectorXd x(rhs.size());
  int off = 0;
  for (const auto& b : blocks) {
    const int n = static_cast<int>(b.rows());
    Eigen::MatrixXd damped = b;
    damped.diagonal().array() += damping;
    x.segment(off, n) = damped.ldlt().solve(rhs.segment(off, n));
    off += n;
  }
  return x;
}

ArchDistribution ArchDistribution::uniform(const SpaceConfig& config) {
  config.check();
  ArchDistribution dist;
  dist.config_ = config;
  const int ops_nc = static_cast<int>(config.conv_choices.size());
  for (int l = 0; l < config.spatial_layers; ++l)
    dist.decisions_.emplace_back(ops_nc);
  for (int s = 0; s < config.num_slots(); ++s)
    dist.decisions_.emplace_back(config.spatial_layers);
  for (int j = 0; j < config.sequential_layers * 4; ++j)
    dist.decisions_.emplace_back(2);
  return dist;
}

int ArchDistribution::dim() const {
  int n = 0;
  for (const auto& d : decisions_) n += d.num_categories() - 1;
  return n;
}

std::string ArchDistribution::decision_id(int i) const {
  const int m = config_.spatial_layers;
  const int slots = config_.num_slots();
  if (i < m) return "op:" + std::to_string(i);
  if (i < m + slots) return "slot:" + std::to_string(i - m);
  const int seq = i - m - slots;
  return "seq:" + std::to_string(seq / 4) + ":" + std::to_string(seq % 4);
}

std::vector<int> ArchDistribution::observed_categories(const Architecture& arch) const {
  if (!is_valid(arch, config_))
    throw ConfigError("architecture does not fit the distribution's space");
  std::vector<int> cats;
  cats.reserve(decisions_.size());
  for (int l = 0; l < config_.spatial_layers; ++l) {
    const auto it = std::find(config_.conv_choices.begin(),
                              config_.conv_choices.end(), arch.ops[l]);
    cats.push_back(static_cast<int>(it - config_.conv_choices.begin()));
  }
  // Slot categories: each stride type's positions sorted ascending, assigned
  // to that type's slots in order.
  std::vector<int> pos22, pos21;
  for (int l = 0; l < config_.spatial_layers; ++l) {
    if (arch.strides[l] == StridePair{2, 2}) pos22.push_back(l);
    if (arch.strides[l] == StridePair{2, 1}) pos21.push_back(l);
  }
  for (int p : pos22) cats.push_back(p);
  for (int p : pos21) cats.push_back(p);
  for (int j = 0; j < config_.sequential_layers; ++j) {
    cats.push_back(arch.seq[j].residual_attention ? 1 : 0);
    cats.push_back(arch.seq[j].relative_embedding ? 1 : 0);
    cats.push_back(arch.seq[j].drop_scaling ? 1 : 0);
    cats.push_back(arch.seq[j].use_glu ? 1 : 0);
  }
  return cats;
}

Architecture ArchDistribution::sample(Rng& rng) const {
  const int m = config_.spatial_layers;
  const int slots = config_.num_slots();
  Architecture arch;
  arch.ops.reserve(m);
  for (int l = 0; l < m; ++l)
    arch.ops.push_back(config_.conv_choices[sample_category(decisions_[l], rng)]);

  // Stride positions: discard draws where any two slots collide.
  std::vector<int> positions(slots);
  bool ok = false;
  for (int attempt = 0; attempt < kMaxRejectionAttempts && !ok; ++attempt) {
    ok = true;
    for (int s = 0; s < slots; ++s)
      positions[s] = sample_category(decisions_[m + s], rng);
    for (int a = 0; a < slots && ok; ++a)
      for (int b = a + 1; b < slots; ++b)
        if (positions[a] == positions[b]) {
          ok = false;
          break;
        }
  }
  if (!ok && slots > 0)
    throw DegenerateDistributionError(
        "stride slot sampling exceeded 10^4 rejection attempts");

  arch.strides.assign(m, StridePair{1, 1});
  for (int s = 0; s < slots; ++s)
    arch.strides[positions[s]] = s < config_.n22() ? StridePair{2, 2} : StridePair{2, 1};

  for (int j = 0; j < config_.sequential_layers; ++j) {
    const int base = m + slots + j * 4;
    TransformerChoice choice;
    choice.residual_attention = sample_category(decisions_[base + 0], rng) == 1;
    choice.relative_embedding = sample_category(decisions_[base + 1], rng) == 1;
    choice.drop_scaling = sample_category(decisions_[base + 2], rng) == 1;
    choice.use_glu = sample_category(decisions_[base + 3], rng) == 1;
    arch.seq.push_back(choice);
  }
  return arch;
}

double ArchDistribution::log_prob(const Architecture& arch) const {
  const std::vector<int> cats = observed_categories(arch);
  double lp = 0.0;
  for (std::size_t i = 0; i < decisions_.size(); ++i)
    lp += meshnas::log_prob(decisions_[i], cats[i]);
  return lp;
}

Eigen::VectorXd ArchDistribution::grad_log_prob(const Architecture& arch) const {
  const std::vector<int> cats = observed_categories(arch);
  Eigen::VectorXd grad(dim());
  int off = 0;
  for (std::size_t i = 0; i < decisions_.size(); ++i) {
    const int k = decisions_[i].num_categories() - 1;
    const Eigen::VectorXd p = probs(decisions_[i]);
    for (int j = 0; j < k; ++j)
      grad[off + j] = (cats[i] == j ? 1.0 : 0.0) - p[j];
    off += k;
  }
  return grad;
}

std::string ArchDistribution::to_json() const {
  nlohmann::json doc;
  for (int i = 0; i < num_decisions(); ++i) {
    std::vector<double> eta(decisions_[i].eta.data(),
                            decisions_[i].eta.data() + decisions_[i].eta.size());
    doc[decision_id(i)] = eta;
  }
  return doc.dump(2);
}

ArchDistribution ArchDistribution::from_json(const SpaceConfig& config,
                                             const std::string& text) {
  ArchDistribution dist = uniform(config);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("distribution state is not valid JSON: ") + e.what());
  }
  for (int i = 0; i < dist.num_decisions(); ++i) {
    const std::string id = dist.decision_id(i);
    if (!doc.contains(id)) throw ConfigError("distribution state missing '" + id + "'");
    const auto eta = doc.at(id).get<std::vector<double>>();
    if (eta.size() != static_cast<std::size_t>(dist.decisions_[i].eta.size()))
      throw ConfigError("distribution state has wrong arity for '" + id + "'");
    for (std::size_t j = 0; j < eta.size(); ++j) dist.decisions_[i].eta[j] = eta[j];
  }
  return dist;
}

BlockDiagMatrix fisher_analytic(const ArchDistribution& dist) {
  BlockDiagMatrix fisher;
  fisher.blocks.reserve(dist.num_decisions());
  for (int i = 0; i < dist.num_decisions(); ++i) {
    const Eigen::VectorXd p = probs(dist.decision(i));
    const int k = static_cast<int>(p.size()) - 1;
    const Eigen::VectorXd head = p.head(k);
    Eigen::MatrixXd block = -head * head.transpose();
    block.diagonal() += head;
    fisher.blocks.push_back(std::move(block));
  }
  return fisher;
}

Eigen::MatrixXd fisher_empirical(const ArchDistribution& dist,
                                 std::span<const Architecture> samples) {
  if (samples.empty())
    throw ConfigError("fisher_empirical needs at least one sample");
  const int n = dist.dim();
  Eigen::MatrixXd fisher = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const Eigen::VectorXd g = dist.grad_log_prob(samples[j]);
    const double countj = static_cast<double>(j);
    fisher = (countj * fisher + g * g.transpose()) / (countj + 1.0);
  }
  return fisher;
}

Eigen::MatrixXd fisher_empirical(const ArchDistribution& dist, int num_samples,
                                 Rng& rng) {
  if (num_samples < 1)
    throw ConfigError("fisher_empirical needs at least one sample");
  const int n = dist.dim();
  Eigen::MatrixXd fisher = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < num_samples; ++j) {
    const Eigen::VectorXd g = dist.grad_log_prob(dist.sample(rng));
    const double countj = static_cast<double>(j);
    fisher = (countj * fisher + g * g.transpose()) / (countj + 1.0);
  }
  return fisher;
}

}  // namespace meshnas
