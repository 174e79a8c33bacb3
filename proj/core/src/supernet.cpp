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

#include "meshnas/supernet.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

#include "meshnas/error.hpp"

namespace meshnas {

namespace {

int op_index(const SpaceConfig& config, ConvChoice op) {
  const auto it =
      std::find(config.conv_choices.begin(), config.conv_choices.end(), op);
  if (it == config.conv_choices.end())
    throw ConfigError("convolution choice not in candidate set");
  return static_cast<int>(it - config.conv_choices.begin());
}

PartialArchitecture concat(const PartialArchitecture& prefix, const BlockPath& bp) {
  PartialArchitecture out = prefix;
  out.strides.insert(out.strides.end(), bp.strides.begin(), bp.strides.end());
  out.ops.insert(out.ops.end(), bp.ops.begin(), bp.ops.end());
  out.seq = bp.seq;
  return out;
}

}  // namespace

BlockPartition BlockPartition::make(const SpaceConfig& config, int num_blocks) {
  config.check();
  const int m = config.spatial_layers;
  if (num_blocks < 2) throw ConfigError("need at least 2 blocks");
  const int spatial_blocks = num_blocks - 1;
  if (m % spatial_blocks != 0) {
    std::string valid;
    for (int d = 1; d <= m; ++d) {
      if (m % d == 0) {
        if (!valid.empty()) valid += ", ";
        valid += std::to_string(d + 1);
      }
    }
    throw ConfigError("spatial model of " + std::to_string(m) +
                      " layers cannot be split into " + std::to_string(spatial_blocks) +
                      " equal blocks; valid K choices: " + valid);
  }
  BlockPartition partition;
  partition.num_blocks = num_blocks;
  const int span = m / spatial_blocks;
  for (int b = 0; b < spatial_blocks; ++b)
    partition.spatial_ranges.emplace_back(b * span, (b + 1) * span);
  return partition;
}

int BlockPartition::block_of_spatial_layer(int layer) const {
  for (std::size_t b = 0; b < spatial_ranges.size(); ++b)
    if (layer >= spatial_ranges[b].first && layer < spatial_ranges[b].second)
      return static_cast<int>(b);
  throw ConfigError("spatial layer " + std::to_string(layer) + " out of range");
}

std::string strategy_name(TrainStrategy s) {
  switch (s) {
    case TrainStrategy::kRandomPath: return "random_path";
    case TrainStrategy::kBestPath: return "best_path";
    case TrainStrategy::kCoUpdate: return "co_update";
    case TrainStrategy::kSpos: return "spos";
  }
  return "unknown";
}

TrainStrategy parse_strategy(const std::string& name) {
  if (name == "random_path") return TrainStrategy::kRandomPath;
  if (name == "best_path") return TrainStrategy::kBestPath;
  if (name == "co_update") return TrainStrategy::kCoUpdate;
  if (name == "spos") return TrainStrategy::kSpos;
  throw ConfigError("unknown strategy '" + name +
                    "' (expected random_path|best_path|co_update|spos)");
}

SupernetStore::SupernetStore(SpaceConfig config, BlockPartition partition,
                             double ema_rate)
    : config_(std::move(config)),
      partition_(std::move(partition)),
      lattice_(PathLattice(config_)),
      ema_rate_(ema_rate) {
  blocks_.resize(partition_.num_blocks);
  lookups_.resize(partition_.num_blocks);
}

bool SupernetStore::all_trained() const {
  return std::all_of(blocks_.begin(), blocks_.end(),
                     [](const BlockState& b) { return b.trained; });
}

const EdgeStats* SupernetStore::find(const SpatialEdgeKey& key) const {
  const auto it = spatial_edges_.find(key);
  return it == spatial_edges_.end() ? nullptr : &it->second;
}

const EdgeStats* SupernetStore::find(const SeqEdgeKey& key) const {
  const auto it = seq_edges_.find(key);
  return it == seq_edges_.end() ? nullptr : &it->second;
}

std::vector<SpatialEdgeKey> SupernetStore::spatial_edge_universe(int block) const {
  const auto [lo, hi] = partition_.spatial_ranges.at(block);
  std::vector<SpatialEdgeKey> keys;
  const int ops = static_cast<int>(config_.conv_choices.size());
  for (int l = lo; l < hi; ++l) {
    for (const PathLattice::State& s : lattice_->states_at(l)) {
      for (int si = 0; si < static_cast<int>(kStrideChoices.size()); ++si) {
        PathLattice::State next = s;
        if (kStrideChoices[si] == StridePair{2, 2}) ++next.used22;
        if (kStrideChoices[si] == StridePair{2, 1}) ++next.used21;
        if (!lattice_->state_valid(l + 1, next)) continue;
        for (int oi = 0; oi < ops; ++oi)
          keys.push_back(SpatialEdgeKey{l, s.used22, s.used21, si, oi});
      }
    }
  }
  return keys;
}

std::vector<SeqEdgeKey> SupernetStore::seq_edge_universe() const {
  std::vector<SeqEdgeKey> keys;
  for (int j = 0; j < config_.sequential_layers; ++j)
    for (int c = 0; c < 16; ++c) keys.push_back(SeqEdgeKey{j, c});
  return keys;
}

const std::map<int, LookupEntry>* SupernetStore::lookup(int block) const {
  if (block < 0 || block >= static_cast<int>(lookups_.size())) return nullptr;
  return lookups_[block].empty() ? nullptr : &lookups_[block];
}

void SupernetStore::update_edge(EdgeStats& stats, double signal) {
  stats.score = (1.0 - ema_rate_) * stats.score + ema_rate_ * signal;
  stats.visits += 1;
}

double SupernetStore::partial_score(const PartialArchitecture& partial) const {
  double raw = 0.0;
  int used22 = 0, used21 = 0;
  for (std::size_t l = 0; l < partial.strides.size(); ++l) {
    const SpatialEdgeKey key{static_cast<int>(l), used22, used21,
                             stride_index(partial.strides[l]),
                             op_index(config_, partial.ops[l])};
    const EdgeStats* stats = find(key);
    const int block = partition_.block_of_spatial_layer(static_cast<int>(l));
    raw += (stats != nullptr ? stats->score : 0.0) - blocks_[block].bias_applied;
    if (partial.strides[l] == StridePair{2, 2}) ++used22;
    if (partial.strides[l] == StridePair{2, 1}) ++used21;
  }
  const int seq_block = partition_.sequential_block();
  for (std::size_t j = 0; j < partial.seq.size(); ++j) {
    const SeqEdgeKey key{static_cast<int>(j), partial.seq[j].index()};
    const EdgeStats* stats = find(key);
    raw += (stats != nullptr ? stats->score : 0.0) - blocks_[seq_block].bias_applied;
  }
  return SyntheticBenchmark::squash(raw);
}

double SupernetStore::oneshot_eval(const Architecture& arch) const {
  for (int k = 0; k < partition_.num_blocks; ++k)
    if (!blocks_[k].trained)
      throw StoreError("one-shot evaluation through untrained block " +
                       std::to_string(k));
  const auto violations = validate(arch, config_);
  if (!violations.empty())
    throw StoreError("one-shot evaluation of invalid architecture: " +
                     violations.front().constraint);
  return partial_score(PartialArchitecture::from(arch));
}

std::string SupernetStore::edge_id(const SpatialEdgeKey& key) {
  const StridePair s = kStrideChoices[key.stride_idx];
  return "s" + std::to_string(key.layer) + ":d" + std::to_string(key.used22) + "," +
         std::to_string(key.used21) + ":S" + std::to_string(s.sh) +
         std::to_string(s.sw) + ":" + std::to_string(key.op_idx);
}

std::string SupernetStore::edge_id(const SeqEdgeKey& key) {
  return "q" + std::to_string(key.layer) + ":" +
         TransformerChoice::from_index(key.choice).token();
}

BlockPath sample_block_path(const SupernetStore& store, int block, Rng& rng) {
  const SpaceConfig& config = store.config();
  BlockPath bp;
  if (block == store.partition().sequential_block()) {
    bp.entry = PathLattice::State{config.n22(), config.n21()};
    for (int j = 0; j < config.sequential_layers; ++j)
      bp.seq.push_back(
          TransformerChoice::from_index(static_cast<int>(rng.uniform_int(16))));
    return bp;
  }
  const auto [lo, hi] = store.partition().spatial_ranges.at(block);
  bp.strides = store.lattice().sample_segment(lo, hi, rng, &bp.entry);
  for (int l = lo; l < hi; ++l)
    bp.ops.push_back(
        config.conv_choices[rng.uniform_int(config.conv_choices.size())]);
  return bp;
}

PartialArchitecture sample_prefix(const SupernetStore& store, int block,
                                  PathLattice::State entry, Rng& rng) {
  PartialArchitecture prefix;
  if (block == 0) return prefix;
  const int boundary = block == store.partition().sequential_block()
                           ? store.config().spatial_layers
                           : store.partition().spatial_ranges.at(block).first;
  prefix.strides = store.lattice().sample_prefix_to(boundary, entry, rng);
  const auto& choices = store.config().conv_choices;
  for (int l = 0; l < boundary; ++l)
    prefix.ops.push_back(choices[rng.uniform_int(choices.size())]);
  return prefix;
}

PartialArchitecture best_prefix(const SupernetStore& store, int block,
                                const BlockPath& block_path) {
  PartialArchitecture prefix;
  if (block == 0) return prefix;
  const int n21 = store.config().n21();
  PathLattice::State required = block_path.entry;
  std::vector<const BlockPath*> chosen(block);
  for (int j = block - 1; j >= 0; --j) {
    const auto* table = store.lookup(j);
    if (table == nullptr)
      throw StoreError("lookup table for block " + std::to_string(j) +
                       " has not been built");
    const int key = required.used22 * (n21 + 1) + required.used21;
    const auto it = table->find(key);
    if (it == table->end())
      throw StoreError("no stored entry of block " + std::to_string(j) +
                       " is compatible with the downstream input resolution");
    chosen[j] = &it->second.path;
    required = it->second.path.entry;
  }
  for (int j = 0; j < block; ++j) {
    prefix.strides.insert(prefix.strides.end(), chosen[j]->strides.begin(),
                          chosen[j]->strides.end());
    prefix.ops.insert(prefix.ops.end(), chosen[j]->ops.begin(),
                      chosen[j]->ops.end());
  }
  return prefix;
}

void build_lookup(SupernetStore& store, int block, int cap) {
  const SpaceConfig& config = store.config_;
  const int n21 = config.n21();
  auto& table = store.lookups_.at(block);
  table.clear();
  int evaluated = 0;

  auto consider = [&](const BlockPath& bp, PathLattice::State exit_state) {
    const PartialArchitecture prefix = best_prefix(store, block, bp);
    const double perf = store.partial_score(concat(prefix, bp));
    const int key = exit_state.used22 * (n21 + 1) + exit_state.used21;
    const auto it = table.find(key);
    if (it == table.end())
      table.emplace(key, LookupEntry{bp, perf});
    else if (perf > it->second.perf)
      it->second = LookupEntry{bp, perf};
    ++evaluated;
  };

  if (block == store.partition_.sequential_block()) {
    const PathLattice::State exit_state{config.n22(), config.n21()};
    const int n = config.sequential_layers;
    std::vector<int> combo(n, 0);
    while (evaluated < cap) {
      BlockPath bp;
      bp.entry = exit_state;
      for (int j = 0; j < n; ++j)
        bp.seq.push_back(TransformerChoice::from_index(combo[j]));
      consider(bp, exit_state);
      int pos = n - 1;
      while (pos >= 0 && ++combo[pos] == 16) combo[pos--] = 0;
      if (pos < 0) break;
    }
    return;
  }

  const auto [lo, hi] = store.partition_.spatial_ranges.at(block);
  const PathLattice& lattice = store.lattice();
  const int span = hi - lo;
  const int num_ops = static_cast<int>(config.conv_choices.size());

  std::vector<StridePair> strides(span);
  std::function<void(int, PathLattice::State, PathLattice::State)> walk =
      [&](int l, PathLattice::State s, PathLattice::State entry) {
        if (evaluated >= cap) return;
        if (l == hi) {
          // All op combinations of this stride segment, odometer order.
          std::vector<int> ops(span, 0);
          while (evaluated < cap) {
            BlockPath bp;
            bp.entry = entry;
            bp.strides = strides;
            for (int i = 0; i < span; ++i)
              bp.ops.push_back(config.conv_choices[ops[i]]);
            consider(bp, s);
            int pos = span - 1;
            while (pos >= 0 && ++ops[pos] == num_ops) ops[pos--] = 0;
            if (pos < 0) break;
          }
          return;
        }
        for (int si = 0; si < static_cast<int>(kStrideChoices.size()); ++si) {
          PathLattice::State next = s;
          if (kStrideChoices[si] == StridePair{2, 2}) ++next.used22;
          if (kStrideChoices[si] == StridePair{2, 1}) ++next.used21;
          if (!lattice.state_valid(l + 1, next)) continue;
          strides[l - lo] = kStrideChoices[si];
          walk(l + 1, next, entry);
        }
      };

  for (const PathLattice::State& entry : lattice.states_at(lo))
    walk(lo, entry, entry);
}

void train_progressive(SupernetStore& store, TrainStrategy strategy,
                       const TrainOracle& oracle, int iterations_per_block,
                       Rng& rng, int lookup_cap) {
  if (iterations_per_block < 0) throw ConfigError("iterations must be >= 0");
  const std::string name = strategy_name(strategy);
  if (store.strategy_.empty())
    store.strategy_ = name;
  else if (store.strategy_ != name)
    throw ConfigError("store was trained with strategy '" + store.strategy_ +
                      "', cannot continue with '" + name + "'");

  const SpaceConfig& config = store.config_;
  const int num_blocks = store.partition_.num_blocks;
  const int m = config.spatial_layers;

  // Applies signals to the spatial layers [from, to) and, when with_seq, the
  // sequential layers of `partial`.
  auto apply = [&](const PartialArchitecture& partial,
                   const std::vector<double>& signals, int from, int to,
                   bool with_seq) {
    int used22 = 0, used21 = 0;
    for (int l = 0; l < static_cast<int>(partial.strides.size()); ++l) {
      if (l >= from && l < to) {
        const SpatialEdgeKey key{l, used22, used21,
                                 stride_index(partial.strides[l]),
                                 op_index(config, partial.ops[l])};
        store.update_edge(store.stats(key), signals[l]);
      }
      if (partial.strides[l] == StridePair{2, 2}) ++used22;
      if (partial.strides[l] == StridePair{2, 1}) ++used21;
    }
    if (with_seq) {
      const int spatial = static_cast<int>(partial.strides.size());
      for (int j = 0; j < static_cast<int>(partial.seq.size()); ++j) {
        const SeqEdgeKey key{j, partial.seq[j].index()};
        store.update_edge(store.stats(key), signals[spatial + j]);
      }
    }
  };

  try {
    if (strategy == TrainStrategy::kSpos) {
      const std::uint64_t total =
          static_cast<std::uint64_t>(num_blocks) * iterations_per_block;
      for (std::uint64_t t = store.blocks_[0].iterations; t < total; ++t) {
        Architecture arch;
        arch.strides = store.lattice().sample_path(rng);
        for (int l = 0; l < m; ++l)
          arch.ops.push_back(
              config.conv_choices[rng.uniform_int(config.conv_choices.size())]);
        for (int j = 0; j < config.sequential_layers; ++j)
          arch.seq.push_back(
              TransformerChoice::from_index(static_cast<int>(rng.uniform_int(16))));
        const PartialArchitecture partial = PartialArchitecture::from(arch);
        const auto signals = oracle.edge_signals(partial, -1, rng);
        apply(partial, signals, 0, m, true);
      }
      for (auto& blockstate : store.blocks_) {
        blockstate.trained = true;
        blockstate.bias_applied = 0.0;
        blockstate.iterations = total;
      }
      return;
    }

    for (int k = 0; k < num_blocks; ++k) {
      if (store.blocks_[k].trained) continue;
      store.blocks_[k].bias_applied = oracle.block_bias(k);
      const bool sequential = k == store.partition_.sequential_block();
      for (std::uint64_t t = store.blocks_[k].iterations;
           t < static_cast<std::uint64_t>(iterations_per_block); ++t) {
        const BlockPath bp = sample_block_path(store, k, rng);
        PartialArchitecture prefix;
        if (k > 0) {
          prefix = strategy == TrainStrategy::kBestPath
                       ? best_prefix(store, k, bp)
                       : sample_prefix(store, k, bp.entry, rng);
        }
        const PartialArchitecture partial = concat(prefix, bp);
        const auto signals = oracle.edge_signals(partial, k, rng);
        const int lo = sequential ? m : store.partition_.spatial_ranges[k].first;
        const int hi = sequential ? m : store.partition_.spatial_ranges[k].second;
        const int from = strategy == TrainStrategy::kCoUpdate ? 0 : lo;
        apply(partial, signals, from, hi, sequential);
      }
      store.blocks_[k].iterations = iterations_per_block;
      store.blocks_[k].trained = true;
      if (strategy == TrainStrategy::kBestPath) build_lookup(store, k, lookup_cap);
    }
  } catch (...) {
    store.aborted_ = true;
    throw;
  }
}

namespace {

std::string spatial_tokens(const std::vector<StridePair>& strides,
                           const std::vector<ConvChoice>& ops) {
  std::string out;
  for (std::size_t i = 0; i < strides.size(); ++i) {
    if (i > 0) out += '-';
    out += "MB" + std::to_string(ops[i].kernel) + "E" +
           std::to_string(ops[i].expansion) + "S" + std::to_string(strides[i].sh) +
           std::to_string(strides[i].sw);
  }
  return out;
}

std::string seq_tokens(const std::vector<TransformerChoice>& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i > 0) out += '-';
    out += seq[i].token();
  }
  return out;
}

void parse_spatial_tokens(const std::string& text, std::vector<StridePair>* strides,
                          std::vector<ConvChoice>* ops) {
  if (text.empty()) return;
  std::istringstream in(text);
  std::string token;
  while (std::getline(in, token, '-')) {
    if (token.size() != 8)
      throw ConfigError("bad spatial token in checkpoint: " + token);
    strides->push_back(StridePair{token[6] - '0', token[7] - '0'});
    ops->push_back(ConvChoice{token[2] - '0', token[4] - '0'});
  }
}

std::vector<TransformerChoice> parse_seq_tokens(const std::string& text) {
  std::vector<TransformerChoice> seq;
  if (text.empty()) return seq;
  std::istringstream in(text);
  std::string token;
  while (std::getline(in, token, '-')) {
    int idx = 0;
    for (char c : token) idx = (idx << 1) | (c - '0');
    seq.push_back(TransformerChoice::from_index(idx));
  }
  return seq;
}

}  // namespace

std::string SupernetStore::to_json() const {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["config"] = nlohmann::json::parse(config_.to_json());
  nlohmann::json conv = nlohmann::json::array();
  for (const ConvChoice& c : config_.conv_choices)
    conv.push_back({c.kernel, c.expansion});
  doc["conv_choices"] = conv;
  doc["K"] = partition_.num_blocks;
  doc["ema_rate"] = ema_rate_;
  doc["strategy"] = strategy_;
  doc["aborted"] = aborted_;
  nlohmann::json blocks = nlohmann::json::array();
  for (const BlockState& b : blocks_)
    blocks.push_back({{"trained", b.trained},
                      {"bias", b.bias_applied},
                      {"iterations", b.iterations}});
  doc["blocks"] = blocks;
  nlohmann::json edges;
  for (const auto& [key, stats] : spatial_edges_)
    edges[edge_id(key)] = {{"score", stats.score}, {"visits", stats.visits}};
  for (const auto& [key, stats] : seq_edges_)
    edges[edge_id(key)] = {{"score", stats.score}, {"visits", stats.visits}};
  doc["edges"] = edges;
  nlohmann::json lookups = nlohmann::json::array();
  for (const auto& table : lookups_) {
    nlohmann::json jt;
    for (const auto& [key, entry] : table) {
      jt[std::to_string(key)] = {
          {"entry", {entry.path.entry.used22, entry.path.entry.used21}},
          {"spatial", spatial_tokens(entry.path.strides, entry.path.ops)},
          {"seq", seq_tokens(entry.path.seq)},
          {"perf", entry.perf}};
    }
    lookups.push_back(jt);
  }
  doc["lookups"] = lookups;
  return doc.dump(2);
}

SupernetStore SupernetStore::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  SpaceConfig config = SpaceConfig::from_json(doc.at("config").dump());
  config.conv_choices.clear();
  for (const auto& c : doc.at("conv_choices"))
    config.conv_choices.push_back(ConvChoice{c.at(0).get<int>(), c.at(1).get<int>()});
  config.check();
  SupernetStore store(config, BlockPartition::make(config, doc.at("K").get<int>()),
                      doc.at("ema_rate").get<double>());
  store.strategy_ = doc.at("strategy").get<std::string>();
  store.aborted_ = doc.at("aborted").get<bool>();
  const auto& blocks = doc.at("blocks");
  for (std::size_t k = 0; k < store.blocks_.size(); ++k) {
    store.blocks_[k].trained = blocks.at(k).at("trained").get<bool>();
    store.blocks_[k].bias_applied = blocks.at(k).at("bias").get<double>();
    store.blocks_[k].iterations = blocks.at(k).at("iterations").get<std::uint64_t>();
  }
  for (const auto& item : doc.at("edges").items()) {
    const std::string& id = item.key();
    EdgeStats stats{item.value().at("score").get<double>(),
                    item.value().at("visits").get<std::uint64_t>()};
    // "s<l>:d<i>,<j>:S<shsw>:<op>" or "q<l>:<bits>".
    if (id.empty()) throw ConfigError("empty edge id in checkpoint");
    if (id[0] == 's') {
      int l = 0, i = 0, j = 0, sh = 0, sw = 0, op = 0;
      if (std::sscanf(id.c_str(), "s%d:d%d,%d:S%1d%1d:%d", &l, &i, &j, &sh, &sw,
                      &op) != 6)
        throw ConfigError("bad spatial edge id in checkpoint: " + id);
      store.spatial_edges_[SpatialEdgeKey{l, i, j, stride_index({sh, sw}), op}] =
          stats;
    } else if (id[0] == 'q') {
      int l = 0;
      char bits[8] = {0};
      if (std::sscanf(id.c_str(), "q%d:%4s", &l, bits) != 2)
        throw ConfigError("bad sequential edge id in checkpoint: " + id);
      int idx = 0;
      for (int b = 0; b < 4; ++b) idx = (idx << 1) | (bits[b] - '0');
      store.seq_edges_[SeqEdgeKey{l, idx}] = stats;
    } else {
      throw ConfigError("bad edge id in checkpoint: " + id);
    }
  }
  const auto& lookups = doc.at("lookups");
  for (std::size_t k = 0; k < store.lookups_.size(); ++k) {
    for (const auto& item : lookups.at(k).items()) {
      LookupEntry entry;
      entry.path.entry.used22 = item.value().at("entry").at(0).get<int>();
      entry.path.entry.used21 = item.value().at("entry").at(1).get<int>();
      parse_spatial_tokens(item.value().at("spatial").get<std::string>(),
                           &entry.path.strides, &entry.path.ops);
      entry.path.seq = parse_seq_tokens(item.value().at("seq").get<std::string>());
      entry.perf = item.value().at("perf").get<double>();
      store.lookups_[k][std::stoi(item.key())] = entry;
    }
  }
  return store;
}

void SupernetStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << to_json();
}

SupernetStore SupernetStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

}  // namespace meshnas
