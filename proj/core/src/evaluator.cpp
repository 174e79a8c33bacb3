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

#include "meshnas/evaluator.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "meshnas/error.hpp"

namespace meshnas {

namespace {

// Domain tags keep the hash streams of unrelated quantities disjoint.
constexpr std::uint64_t kTagEdge = 0xE1;
constexpr std::uint64_t kTagPair = 0x9A;
constexpr std::uint64_t kTagBias = 0xB5;
constexpr std::uint64_t kTagJitter = 0x11;

double unit_from(std::uint64_t word) { return u64_to_unit(word); }

// Compact per-layer choice code used in pair terms.
std::uint64_t spatial_code(StridePair s, ConvChoice op) {
  return static_cast<std::uint64_t>(s.sh) * 1000 + s.sw * 100 + op.kernel * 10 +
         op.expansion;
}

std::uint64_t seq_code(TransformerChoice c) {
  return 2000 + static_cast<std::uint64_t>(c.index());
}

std::uint64_t token_hash(const std::string& token) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : token) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

SyntheticBenchmark::SyntheticBenchmark(SpaceConfig config, Params params)
    : config_(std::move(config)), params_(params) {
  config_.check();
}

double SyntheticBenchmark::edge_quality_spatial(int layer, int used22, int used21,
                                                StridePair s, ConvChoice op) const {
  const std::uint64_t word =
      mix_u64(params_.seed, kTagEdge, static_cast<std::uint64_t>(layer),
              static_cast<std::uint64_t>(used22), static_cast<std::uint64_t>(used21),
              spatial_code(s, op));
  return unit_from(word) - 0.5;
}

double SyntheticBenchmark::edge_quality_seq(int layer, TransformerChoice c) const {
  const std::uint64_t word = mix_u64(
      params_.seed, kTagEdge,
      static_cast<std::uint64_t>(config_.spatial_layers + layer), 0, 0, seq_code(c));
  return unit_from(word) - 0.5;
}

double SyntheticBenchmark::pair_term(int left_layer, std::uint64_t left_code,
                                     std::uint64_t right_code) const {
  const std::uint64_t word = mix_u64(params_.seed, kTagPair,
                                     static_cast<std::uint64_t>(left_layer),
                                     left_code, right_code);
  return unit_from(word) - 0.5;
}

double SyntheticBenchmark::block_bias(int block) const {
  if (block < 0) return 0.0;
  const std::uint64_t word =
      mix_u64(params_.seed, kTagBias, static_cast<std::uint64_t>(block));
  return (unit_from(word) - 0.5) * 0.2;
}

std::vector<std::pair<int, int>> SyntheticBenchmark::entry_states(
    const PartialArchitecture& partial) const {
  if (partial.strides.size() != partial.ops.size())
    throw ConfigError("partial path has mismatched stride/op lengths");
  if (partial.spatial_count() > config_.spatial_layers)
    throw ConfigError("partial path longer than the spatial model");
  if (!partial.seq.empty() &&
      partial.seq.size() != static_cast<std::size_t>(config_.sequential_layers))
    throw ConfigError("partial sequential part must be absent or complete");
  const int n22 = config_.n22();
  const int n21 = config_.n21();
  std::vector<std::pair<int, int>> states;
  states.reserve(partial.strides.size());
  int used22 = 0, used21 = 0;
  for (std::size_t l = 0; l < partial.strides.size(); ++l) {
    states.emplace_back(used22, used21);
    const StridePair s = partial.strides[l];
    if (stride_index(s) < 0) throw ConfigError("partial path has invalid stride");
    if (s == StridePair{2, 2}) ++used22;
    if (s == StridePair{2, 1}) ++used21;
    if (used22 > n22 || used21 > n21)
      throw ConfigError("partial path exceeds the stride budget");
  }
  const int remaining = config_.spatial_layers - partial.spatial_count();
  if (remaining < (n22 - used22) + (n21 - used21))
    throw ConfigError("partial path cannot reach the target resolution");
  return states;
}

double SyntheticBenchmark::edge_sum(const PartialArchitecture& partial) const {
  const auto states = entry_states(partial);
  double sum = 0.0;
  for (std::size_t l = 0; l < partial.strides.size(); ++l)
    sum += edge_quality_spatial(static_cast<int>(l), states[l].first,
                                states[l].second, partial.strides[l], partial.ops[l]);
  for (std::size_t j = 0; j < partial.seq.size(); ++j)
    sum += edge_quality_seq(static_cast<int>(j), partial.seq[j]);
  return sum;
}

double SyntheticBenchmark::raw_quality(const Architecture& arch) const {
  const auto violations = validate(arch, config_);
  if (!violations.empty())
    throw ConfigError("invalid architecture: " + violations.front().constraint);
  double sum = edge_sum(PartialArchitecture::from(arch));

  double pairs = 0.0;
  const int m = config_.spatial_layers;
  for (int l = 0; l + 1 < m; ++l)
    pairs += pair_term(l, spatial_code(arch.strides[l], arch.ops[l]),
                       spatial_code(arch.strides[l + 1], arch.ops[l + 1]));
  if (m > 0 && !arch.seq.empty())
    pairs += pair_term(m - 1, spatial_code(arch.strides[m - 1], arch.ops[m - 1]),
                       seq_code(arch.seq[0]));
  for (std::size_t j = 0; j + 1 < arch.seq.size(); ++j)
    pairs += pair_term(m + static_cast<int>(j), seq_code(arch.seq[j]),
                       seq_code(arch.seq[j + 1]));
  return sum + params_.interaction_weight * pairs;
}

double SyntheticBenchmark::true_quality(const Architecture& arch) const {
  return squash(raw_quality(arch));
}

double SyntheticBenchmark::train_signal(const PartialArchitecture& partial,
                                        int block, Rng& rng) const {
  return edge_sum(partial) + block_bias(block) + params_.noise_sigma * rng.normal();
}

std::vector<double> SyntheticBenchmark::edge_signals(const PartialArchitecture& partial,
                                                     int block, Rng& rng) const {
  const auto states = entry_states(partial);
  const double bias = block_bias(block);
  std::vector<double> signals;
  signals.reserve(partial.strides.size() + partial.seq.size());
  for (std::size_t l = 0; l < partial.strides.size(); ++l) {
    const double q =
        edge_quality_spatial(static_cast<int>(l), states[l].first, states[l].second,
                             partial.strides[l], partial.ops[l]);
    signals.push_back(q + bias + params_.noise_sigma * rng.normal());
  }
  for (std::size_t j = 0; j < partial.seq.size(); ++j) {
    const double q = edge_quality_seq(static_cast<int>(j), partial.seq[j]);
    signals.push_back(q + bias + params_.noise_sigma * rng.normal());
  }
  return signals;
}

std::string op_token(ConvChoice op) {
  return "MB" + std::to_string(op.kernel) + "E" + std::to_string(op.expansion);
}

std::string op_token(TransformerChoice c) { return "TR" + c.token(); }

void LatencyTable::set(const Key& key, double ms) { entries_[key] = ms; }

double LatencyTable::cost(const Key& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end())
    throw ConfigError("latency table has no entry for (" + key.op + ", " +
                      std::to_string(key.h) + "x" + std::to_string(key.w) + "x" +
                      std::to_string(key.channels) + ")");
  return it->second;
}

std::string LatencyTable::to_csv() const {
  std::string out = "op,h,w,channels,ms\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", head_cost_ms);
  out += "HEAD,0,0,0," + std::string(buf) + "\n";
  for (const auto& [key, ms] : entries_) {
    std::snprintf(buf, sizeof(buf), "%.17g", ms);
    out += key.op + "," + std::to_string(key.h) + "," + std::to_string(key.w) + "," +
           std::to_string(key.channels) + "," + buf + "\n";
  }
  return out;
}

LatencyTable LatencyTable::from_csv(const std::string& text) {
  LatencyTable table;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "op,h,w,channels,ms")
    throw ConfigError("latency CSV must start with header op,h,w,channels,ms");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string op, field;
    Key key;
    double ms = 0.0;
    if (!std::getline(row, key.op, ',')) throw ConfigError("bad latency CSV row: " + line);
    auto next_int = [&](int& out) {
      if (!std::getline(row, field, ',')) throw ConfigError("bad latency CSV row: " + line);
      out = std::stoi(field);
    };
    next_int(key.h);
    next_int(key.w);
    next_int(key.channels);
    if (!std::getline(row, field, ',')) throw ConfigError("bad latency CSV row: " + line);
    ms = std::stod(field);
    if (key.op == "HEAD")
      table.head_cost_ms = ms;
    else
      table.set(key, ms);
  }
  return table;
}

void LatencyTable::save_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write latency CSV: " + path);
  out << to_csv();
}

LatencyTable LatencyTable::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read latency CSV: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_csv(buffer.str());
}

LatencyTable LatencyTable::synthesize(const SpaceConfig& config, std::uint64_t seed) {
  config.check();
  // Scales chosen so that full architectures land in the low-millisecond
  // range on standard-sized configs.
  constexpr double kMbScale = 6.0e-9;
  constexpr double kTrScale = 2.5e-6;

  LatencyTable table;
  auto jitter = [&](const std::string& token) {
    return 0.9 + 0.2 * u64_to_unit(mix_u64(seed, kTagJitter, token_hash(token)));
  };
  table.head_cost_ms = 0.4 * jitter("HEAD");

  const int n22 = config.n22();
  const int n21 = config.n21();
  const int h0 = config.path_input_h();
  const int w0 = config.path_input_w();
  for (int i = 0; i <= n22; ++i) {
    for (int j = 0; j <= n21; ++j) {
      const int h = h0 >> (i + j);
      const int w = w0 >> i;
      const int ch = channels_after_halvings(config.base_channels, i + j);
      for (const ConvChoice& op : config.conv_choices) {
        const std::string token = op_token(op);
        const double units = static_cast<double>(op.kernel) * op.kernel *
                             op.expansion * h * w * ch;
        table.set(Key{token, h, w, ch}, kMbScale * jitter(token) * units);
      }
    }
  }
  if (config.has_stem) {
    const double units =
        9.0 * static_cast<double>(config.input_h) * config.input_w * config.base_channels;
    table.set(Key{"STEM", config.input_h, config.input_w, config.base_channels},
              kMbScale * jitter("STEM") * units);
  }
  const int final_ch = channels_after_halvings(config.base_channels, n22 + n21);
  for (int idx = 0; idx < 16; ++idx) {
    const TransformerChoice c = TransformerChoice::from_index(idx);
    const std::string token = op_token(c);
    const double factor = 1.0 + (c.relative_embedding ? 0.30 : 0.0) +
                          (c.use_glu ? 0.25 : 0.0) +
                          (c.residual_attention ? 0.05 : 0.0) -
                          (c.drop_scaling ? 0.02 : 0.0);
    const double units = static_cast<double>(config.target_w) * final_ch;
    table.set(Key{token, config.target_h, config.target_w, final_ch},
              kTrScale * jitter(token) * units * factor);
  }
  return table;
}

double latency_ms(const PartialArchitecture& partial, const SpaceConfig& config,
                  const LatencyTable& table) {
  if (partial.strides.size() != partial.ops.size())
    throw ConfigError("partial path has mismatched stride/op lengths");
  double total = table.head_cost_ms;
  if (config.has_stem && partial.spatial_count() > 0)
    total += table.cost(LatencyTable::Key{"STEM", config.input_h, config.input_w,
                                          config.base_channels});
  int h = config.path_input_h();
  int w = config.path_input_w();
  int halvings = 0;
  for (std::size_t l = 0; l < partial.strides.size(); ++l) {
    const int ch = channels_after_halvings(config.base_channels, halvings);
    total += table.cost(LatencyTable::Key{op_token(partial.ops[l]), h, w, ch});
    h /= partial.strides[l].sh;
    w /= partial.strides[l].sw;
    if (partial.strides[l].sh == 2) ++halvings;
  }
  const int final_ch =
      channels_after_halvings(config.base_channels, config.num_slots());
  for (const TransformerChoice& c : partial.seq)
    total += table.cost(
        LatencyTable::Key{op_token(c), config.target_h, config.target_w, final_ch});
  return total;
}

double latency_ms(const Architecture& arch, const SpaceConfig& config,
                  const LatencyTable& table) {
  return latency_ms(PartialArchitecture::from(arch), config, table);
}

}  // namespace meshnas
