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

#include "meshnas/search_space.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "meshnas/error.hpp"

namespace meshnas {

namespace {

bool is_power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

int log2_exact(int x) {
  int k = 0;
  while ((1 << k) < x) ++k;
  return k;
}

}  // namespace

int stride_index(StridePair s) {
  for (int i = 0; i < static_cast<int>(kStrideChoices.size()); ++i) {
    if (kStrideChoices[i] == s) return i;
  }
  return -1;
}

std::string TransformerChoice::token() const {
  std::string t(4, '0');
  t[0] = residual_attention ? '1' : '0';
  t[1] = relative_embedding ? '1' : '0';
  t[2] = drop_scaling ? '1' : '0';
  t[3] = use_glu ? '1' : '0';
  return t;
}

int SpaceConfig::n22() const { return log2_exact(path_input_w() / target_w); }

int SpaceConfig::n21() const {
  return log2_exact(path_input_h() / target_h) - n22();
}

void SpaceConfig::check() const {
  if (spatial_layers < 0 || sequential_layers < 0)
    throw ConfigError("layer counts must be non-negative");
  if (input_h <= 0 || input_w <= 0 || target_h <= 0 || target_w <= 0)
    throw ConfigError("geometry must be positive");
  if (base_channels <= 0) throw ConfigError("base_channels must be positive");
  if (has_stem && (input_h % 2 != 0 || input_w % 2 != 0))
    throw ConfigError("stem requires even input dimensions");
  const int h0 = path_input_h();
  const int w0 = path_input_w();
  if (h0 % target_h != 0 || !is_power_of_two(h0 / target_h))
    throw ConfigError("input_h/target_h must be a power of 2");
  if (w0 % target_w != 0 || !is_power_of_two(w0 / target_w))
    throw ConfigError("input_w/target_w must be a power of 2");
  if (h0 / target_h < w0 / target_w)
    throw ConfigError("height must be downsampled at least as much as width");
  if (spatial_layers < num_slots())
    throw ConfigError("spatial_layers smaller than the " +
                      std::to_string(num_slots()) +
                      " required non-identity strides");
  if (conv_choices.empty()) throw ConfigError("conv_choices must not be empty");
  for (std::size_t i = 0; i < conv_choices.size(); ++i) {
    const ConvChoice& c = conv_choices[i];
    if ((c.kernel != 3 && c.kernel != 5) || (c.expansion != 1 && c.expansion != 6))
      throw ConfigError("conv choice outside {3,5}x{1,6}");
    for (std::size_t j = i + 1; j < conv_choices.size(); ++j)
      if (conv_choices[j] == c) throw ConfigError("duplicate conv choice");
  }
}

SpaceConfig SpaceConfig::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  static const char* kKeys[] = {"M",        "N",        "input_h",
                                "input_w",  "target_h", "target_w",
                                "base_channels", "has_stem"};
  for (const char* key : kKeys) {
    if (!doc.contains(key))
      throw ConfigError(std::string("config missing key '") + key + "'");
  }
  for (const auto& item : doc.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) {
          return item.key() == k;
        }) == std::end(kKeys))
      throw ConfigError("unknown config key '" + item.key() + "'");
  }
  SpaceConfig config;
  try {
    config.spatial_layers = doc.at("M").get<int>();
    config.sequential_layers = doc.at("N").get<int>();
    config.input_h = doc.at("input_h").get<int>();
    config.input_w = doc.at("input_w").get<int>();
    config.target_h = doc.at("target_h").get<int>();
    config.target_w = doc.at("target_w").get<int>();
    config.base_channels = doc.at("base_channels").get<int>();
    config.has_stem = doc.at("has_stem").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field has wrong type: ") + e.what());
  }
  config.check();
  return config;
}

SpaceConfig SpaceConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

std::string SpaceConfig::to_json() const {
  nlohmann::json doc;
  doc["M"] = spatial_layers;
  doc["N"] = sequential_layers;
  doc["input_h"] = input_h;
  doc["input_w"] = input_w;
  doc["target_h"] = target_h;
  doc["target_w"] = target_w;
  doc["base_channels"] = base_channels;
  doc["has_stem"] = has_stem;
  return doc.dump(2);
}

std::vector<StridePair> derive_slots(const SpaceConfig& config) {
  config.check();
  std::vector<StridePair> slots;
  slots.insert(slots.end(), config.n22(), StridePair{2, 2});
  slots.insert(slots.end(), config.n21(), StridePair{2, 1});
  return slots;
}

mpz_class count_paths(const SpaceConfig& config) {
  config.check();
  const unsigned n = static_cast<unsigned>(config.num_slots());
  mpz_class positions, split;
  mpz_bin_uiui(positions.get_mpz_t(), static_cast<unsigned>(config.spatial_layers), n);
  mpz_bin_uiui(split.get_mpz_t(), n, static_cast<unsigned>(config.n22()));
  return positions * split;
}

mpz_class count_paths_backtracking(const SpaceConfig& config) {
  config.check();
  mpz_class n = 0;
  const int layers = config.spatial_layers;
  const int out_h = config.target_h;
  const int out_w = config.target_w;
  // Recursive walk over the resolution mesh; branches below the target
  // resolution are pruned.
  std::function<void(int, int, int)> backtrack = [&](int h, int w, int l) {
    if (l == layers) {
      if (h == out_h && w == out_w) ++n;
      return;
    }
    for (const StridePair& s : kStrideChoices) {
      if (h % s.sh != 0 || w % s.sw != 0) continue;
      const int h2 = h / s.sh;
      const int w2 = w / s.sw;
      if (h2 < out_h || w2 < out_w) continue;
      backtrack(h2, w2, l + 1);
    }
  };
  backtrack(config.path_input_h(), config.path_input_w(), 0);
  return n;
}

Cardinality space_cardinality(const SpaceConfig& config) {
  Cardinality card;
  card.paths = count_paths(config);
  mpz_class ops_pow, seq_pow;
  mpz_ui_pow_ui(ops_pow.get_mpz_t(), config.conv_choices.size(),
                static_cast<unsigned>(config.spatial_layers));
  mpz_ui_pow_ui(seq_pow.get_mpz_t(), 16,
                static_cast<unsigned>(config.sequential_layers));
  card.spatial = card.paths * ops_pow;
  card.sequential = seq_pow;
  card.total = card.spatial * card.sequential;
  return card;
}

std::vector<Violation> validate(const Architecture& arch, const SpaceConfig& config) {
  std::vector<Violation> violations;
  const std::size_t m = static_cast<std::size_t>(config.spatial_layers);
  const std::size_t n = static_cast<std::size_t>(config.sequential_layers);
  if (arch.strides.size() != m)
    violations.push_back({"strides-length",
                          "expected " + std::to_string(m) + " strides, got " +
                              std::to_string(arch.strides.size())});
  if (arch.ops.size() != m)
    violations.push_back({"ops-length",
                          "expected " + std::to_string(m) + " ops, got " +
                              std::to_string(arch.ops.size())});
  if (arch.seq.size() != n)
    violations.push_back({"seq-length",
                          "expected " + std::to_string(n) +
                              " transformer layers, got " +
                              std::to_string(arch.seq.size())});

  long long ph = 1, pw = 1;
  for (std::size_t i = 0; i < arch.strides.size(); ++i) {
    if (stride_index(arch.strides[i]) < 0) {
      violations.push_back({"stride-choice",
                            "layer " + std::to_string(i + 1) + " stride (" +
                                std::to_string(arch.strides[i].sh) + "," +
                                std::to_string(arch.strides[i].sw) +
                                ") not admissible"});
      continue;
    }
    ph *= arch.strides[i].sh;
    pw *= arch.strides[i].sw;
  }
  for (std::size_t i = 0; i < arch.ops.size(); ++i) {
    if (std::find(config.conv_choices.begin(), config.conv_choices.end(),
                  arch.ops[i]) == config.conv_choices.end())
      violations.push_back({"op-choice",
                            "layer " + std::to_string(i + 1) +
                                " convolution not in candidate set"});
  }
  if (arch.strides.size() == m) {
    const long long want_h = config.path_input_h() / config.target_h;
    const long long want_w = config.path_input_w() / config.target_w;
    if (ph != want_h)
      violations.push_back({"h-product",
                            "stride height product " + std::to_string(ph) +
                                " != " + std::to_string(want_h)});
    if (pw != want_w)
      violations.push_back({"w-product",
                            "stride width product " + std::to_string(pw) +
                                " != " + std::to_string(want_w)});
  }
  return violations;
}

int channels_after_halvings(int base_channels, int halvings) {
  if (halvings <= 1) return base_channels;
  return base_channels << (halvings - 1);
}

std::vector<LayerGeometry> derive_geometry(const Architecture& arch,
                                           const SpaceConfig& config) {
  const auto violations = validate(arch, config);
  if (!violations.empty())
    throw ConfigError("invalid architecture: " + violations.front().constraint +
                      ": " + violations.front().detail);
  std::vector<LayerGeometry> geometry;
  geometry.reserve(arch.strides.size() + 1);
  int h = config.path_input_h();
  int w = config.path_input_w();
  int halvings = 0;
  geometry.push_back({h, w, channels_after_halvings(config.base_channels, 0)});
  for (const StridePair& s : arch.strides) {
    h /= s.sh;
    w /= s.sw;
    if (s.sh == 2) ++halvings;
    geometry.push_back({h, w, channels_after_halvings(config.base_channels, halvings)});
  }
  return geometry;
}

std::string encode(const Architecture& arch) {
  std::string out;
  for (std::size_t i = 0; i < arch.ops.size(); ++i) {
    if (i > 0) out += '-';
    out += "MB";
    out += std::to_string(arch.ops[i].kernel);
    out += 'E';
    out += std::to_string(arch.ops[i].expansion);
    out += 'S';
    out += std::to_string(arch.strides[i].sh);
    out += std::to_string(arch.strides[i].sw);
  }
  out += '|';
  for (std::size_t i = 0; i < arch.seq.size(); ++i) {
    if (i > 0) out += '-';
    out += arch.seq[i].token();
  }
  return out;
}

namespace {

// Splits `text` into tokens by '-', recording the start offset of each token
// relative to `base`.
std::vector<std::pair<std::string_view, std::size_t>> split_tokens(
    std::string_view text, std::size_t base) {
  std::vector<std::pair<std::string_view, std::size_t>> tokens;
  if (text.empty()) return tokens;
  std::size_t start = 0;
  while (true) {
    const std::size_t dash = text.find('-', start);
    if (dash == std::string_view::npos) {
      tokens.emplace_back(text.substr(start), base + start);
      break;
    }
    tokens.emplace_back(text.substr(start, dash - start), base + start);
    start = dash + 1;
  }
  return tokens;
}

}  // namespace

Architecture decode(std::string_view text, const SpaceConfig& config) {
  const std::size_t bar = text.find('|');
  if (bar == std::string_view::npos)
    throw ParseError("missing '|' separator", text.size());
  if (text.find('|', bar + 1) != std::string_view::npos)
    throw ParseError("more than one '|' separator", text.find('|', bar + 1));

  Architecture arch;
  const auto spatial = split_tokens(text.substr(0, bar), 0);
  if (spatial.size() != static_cast<std::size_t>(config.spatial_layers))
    throw ParseError("expected " + std::to_string(config.spatial_layers) +
                         " spatial tokens, got " + std::to_string(spatial.size()),
                     0);
  for (const auto& [token, pos] : spatial) {
    // MB<k>E<e>S<sh><sw>, all single digits.
    if (token.size() != 8 || token.substr(0, 2) != "MB" || token[3] != 'E' ||
        token[5] != 'S')
      throw ParseError("malformed spatial token '" + std::string(token) + "'", pos);
    auto digit = [&](std::size_t i) -> int {
      if (token[i] < '0' || token[i] > '9')
        throw ParseError("malformed spatial token '" + std::string(token) + "'",
                         pos + i);
      return token[i] - '0';
    };
    ConvChoice op{digit(2), digit(4)};
    StridePair stride{digit(6), digit(7)};
    if (op.kernel != 3 && op.kernel != 5)
      throw ParseError("kernel must be 3 or 5", pos + 2);
    if (op.expansion != 1 && op.expansion != 6)
      throw ParseError("expansion must be 1 or 6", pos + 4);
    if (stride_index(stride) < 0)
      throw ParseError("stride must be 22, 21 or 11", pos + 6);
    arch.ops.push_back(op);
    arch.strides.push_back(stride);
  }

  const auto seq = split_tokens(text.substr(bar + 1), bar + 1);
  if (seq.size() != static_cast<std::size_t>(config.sequential_layers))
    throw ParseError("expected " + std::to_string(config.sequential_layers) +
                         " sequential tokens, got " + std::to_string(seq.size()),
                     bar + 1);
  for (const auto& [token, pos] : seq) {
    if (token.size() != 4)
      throw ParseError("sequential token must have 4 bits", pos);
    int idx = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      if (token[i] != '0' && token[i] != '1')
        throw ParseError("sequential token bit must be 0 or 1", pos + i);
      idx = (idx << 1) | (token[i] - '0');
    }
    arch.seq.push_back(TransformerChoice::from_index(idx));
  }
  return arch;
}

PathLattice::PathLattice(const SpaceConfig& config) {
  config.check();
  layers_ = config.spatial_layers;
  n22_ = config.n22();
  n21_ = config.n21();
  h0_ = config.path_input_h();
  w0_ = config.path_input_w();
  base_channels_ = config.base_channels;
  const int states = (n22_ + 1) * (n21_ + 1);
  suffix_.assign(static_cast<std::size_t>(layers_ + 1) * states, 0);
  prefix_.assign(static_cast<std::size_t>(layers_ + 1) * states, 0);

  auto checked_add = [](std::uint64_t a, std::uint64_t b) {
    const std::uint64_t sum = a + b;
    if (sum < a) throw ConfigError("path count exceeds the 64-bit sampler range");
    return sum;
  };

  suffix_ref(layers_, State{n22_, n21_}) = 1;
  for (int l = layers_ - 1; l >= 0; --l) {
    for (int i = 0; i <= n22_; ++i) {
      for (int j = 0; j <= n21_; ++j) {
        std::uint64_t total = suffix_ref(l + 1, State{i, j});
        if (i < n22_) total = checked_add(total, suffix_ref(l + 1, State{i + 1, j}));
        if (j < n21_) total = checked_add(total, suffix_ref(l + 1, State{i, j + 1}));
        suffix_ref(l, State{i, j}) = total;
      }
    }
  }
  prefix_ref(0, State{0, 0}) = 1;
  for (int l = 0; l < layers_; ++l) {
    for (int i = 0; i <= n22_; ++i) {
      for (int j = 0; j <= n21_; ++j) {
        const std::uint64_t ways = prefix_ref(l, State{i, j});
        if (ways == 0) continue;
        prefix_ref(l + 1, State{i, j}) = checked_add(prefix_ref(l + 1, State{i, j}), ways);
        if (i < n22_)
          prefix_ref(l + 1, State{i + 1, j}) =
              checked_add(prefix_ref(l + 1, State{i + 1, j}), ways);
        if (j < n21_)
          prefix_ref(l + 1, State{i, j + 1}) =
              checked_add(prefix_ref(l + 1, State{i, j + 1}), ways);
      }
    }
  }
}

std::uint64_t& PathLattice::suffix_ref(int layer, State state) {
  return suffix_[static_cast<std::size_t>(layer) * (n22_ + 1) * (n21_ + 1) +
                 state_id(state)];
}

std::uint64_t& PathLattice::prefix_ref(int layer, State state) {
  return prefix_[static_cast<std::size_t>(layer) * (n22_ + 1) * (n21_ + 1) +
                 state_id(state)];
}

std::uint64_t PathLattice::suffix_count(int layer, State state) const {
  return const_cast<PathLattice*>(this)->suffix_ref(layer, state);
}

std::uint64_t PathLattice::prefix_count(int layer, State state) const {
  return const_cast<PathLattice*>(this)->prefix_ref(layer, state);
}

bool PathLattice::state_valid(int layer, State state) const {
  if (state.used22 < 0 || state.used22 > n22_ || state.used21 < 0 ||
      state.used21 > n21_)
    return false;
  return prefix_count(layer, state) > 0 && suffix_count(layer, state) > 0;
}

LayerGeometry PathLattice::geometry_at(int layer, State state) const {
  (void)layer;
  const int halvings = state.used22 + state.used21;
  return LayerGeometry{h0_ >> halvings, w0_ >> state.used22,
                       channels_after_halvings(base_channels_, halvings)};
}

PathLattice::State PathLattice::state_after(const std::vector<StridePair>& strides) const {
  State s;
  for (const StridePair& sp : strides) {
    if (sp == StridePair{2, 2}) ++s.used22;
    else if (sp == StridePair{2, 1}) ++s.used21;
  }
  return s;
}

std::vector<PathLattice::State> PathLattice::states_at(int layer) const {
  std::vector<State> states;
  for (int i = 0; i <= n22_; ++i)
    for (int j = 0; j <= n21_; ++j)
      if (state_valid(layer, State{i, j})) states.push_back(State{i, j});
  return states;
}

std::vector<StridePair> PathLattice::sample_path(Rng& rng) const {
  std::vector<StridePair> path;
  path.reserve(layers_);
  State s;
  for (int l = 0; l < layers_; ++l) {
    const std::uint64_t w22 =
        s.used22 < n22_ ? suffix_count(l + 1, State{s.used22 + 1, s.used21}) : 0;
    const std::uint64_t w21 =
        s.used21 < n21_ ? suffix_count(l + 1, State{s.used22, s.used21 + 1}) : 0;
    const std::uint64_t w11 = suffix_count(l + 1, s);
    const std::uint64_t total = w22 + w21 + w11;
    std::uint64_t pick = rng.uniform_int(total);
    if (pick < w22) {
      path.push_back(StridePair{2, 2});
      ++s.used22;
    } else if (pick < w22 + w21) {
      path.push_back(StridePair{2, 1});
      ++s.used21;
    } else {
      path.push_back(StridePair{1, 1});
    }
  }
  return path;
}

std::vector<StridePair> PathLattice::sample_prefix_to(int layer, State state,
                                                      Rng& rng) const {
  if (layer < 0 || layer > layers_ || prefix_count(layer, state) == 0)
    throw ConfigError("no prefix reaches the requested state");
  std::vector<StridePair> reversed;
  State s = state;
  for (int l = layer; l > 0; --l) {
    const std::uint64_t via22 =
        s.used22 > 0 ? prefix_count(l - 1, State{s.used22 - 1, s.used21}) : 0;
    const std::uint64_t via21 =
        s.used21 > 0 ? prefix_count(l - 1, State{s.used22, s.used21 - 1}) : 0;
    const std::uint64_t via11 = prefix_count(l - 1, s);
    std::uint64_t pick = rng.uniform_int(via22 + via21 + via11);
    if (pick < via22) {
      reversed.push_back(StridePair{2, 2});
      --s.used22;
    } else if (pick < via22 + via21) {
      reversed.push_back(StridePair{2, 1});
      --s.used21;
    } else {
      reversed.push_back(StridePair{1, 1});
    }
  }
  return {reversed.rbegin(), reversed.rend()};
}

std::uint64_t PathLattice::segment_count(int lo, int hi, State entry) const {
  if (!state_valid(lo, entry)) return 0;
  // Count segments from (lo, entry) that end in any globally valid state at hi.
  const int states = (n22_ + 1) * (n21_ + 1);
  std::vector<std::uint64_t> g(static_cast<std::size_t>(hi - lo + 1) * states, 0);
  auto at = [&](int l, State s) -> std::uint64_t& {
    return g[static_cast<std::size_t>(l - lo) * states + state_id(s)];
  };
  for (int i = 0; i <= n22_; ++i)
    for (int j = 0; j <= n21_; ++j)
      if (state_valid(hi, State{i, j})) at(hi, State{i, j}) = 1;
  for (int l = hi - 1; l >= lo; --l) {
    for (int i = 0; i <= n22_; ++i) {
      for (int j = 0; j <= n21_; ++j) {
        if (!state_valid(l, State{i, j})) continue;
        std::uint64_t total = at(l + 1, State{i, j});
        if (i < n22_) total += at(l + 1, State{i + 1, j});
        if (j < n21_) total += at(l + 1, State{i, j + 1});
        at(l, State{i, j}) = total;
      }
    }
  }
  return at(lo, entry);
}

std::vector<StridePair> PathLattice::sample_segment(int lo, int hi, Rng& rng,
                                                    State* entry_out) const {
  // Uniform over all (entry state, stride segment) pairs spanning [lo, hi).
  const int states = (n22_ + 1) * (n21_ + 1);
  std::vector<std::uint64_t> g(static_cast<std::size_t>(hi - lo + 1) * states, 0);
  auto at = [&](int l, State s) -> std::uint64_t& {
    return g[static_cast<std::size_t>(l - lo) * states + state_id(s)];
  };
  for (int i = 0; i <= n22_; ++i)
    for (int j = 0; j <= n21_; ++j)
      if (state_valid(hi, State{i, j})) at(hi, State{i, j}) = 1;
  for (int l = hi - 1; l >= lo; --l) {
    for (int i = 0; i <= n22_; ++i) {
      for (int j = 0; j <= n21_; ++j) {
        if (!state_valid(l, State{i, j})) continue;
        std::uint64_t total = at(l + 1, State{i, j});
        if (i < n22_) total += at(l + 1, State{i + 1, j});
        if (j < n21_) total += at(l + 1, State{i, j + 1});
        at(l, State{i, j}) = total;
      }
    }
  }
  std::uint64_t total = 0;
  for (int i = 0; i <= n22_; ++i)
    for (int j = 0; j <= n21_; ++j)
      if (state_valid(lo, State{i, j})) total += at(lo, State{i, j});
  if (total == 0) throw ConfigError("block has no valid segment");

  State s;
  std::uint64_t pick = rng.uniform_int(total);
  bool chosen = false;
  for (int i = 0; i <= n22_ && !chosen; ++i) {
    for (int j = 0; j <= n21_ && !chosen; ++j) {
      if (!state_valid(lo, State{i, j})) continue;
      const std::uint64_t w = at(lo, State{i, j});
      if (pick < w) {
        s = State{i, j};
        chosen = true;
      } else {
        pick -= w;
      }
    }
  }
  if (entry_out != nullptr) *entry_out = s;

  std::vector<StridePair> segment;
  segment.reserve(hi - lo);
  for (int l = lo; l < hi; ++l) {
    const std::uint64_t w22 =
        s.used22 < n22_ && state_valid(l + 1, State{s.used22 + 1, s.used21})
            ? at(l + 1, State{s.used22 + 1, s.used21})
            : 0;
    const std::uint64_t w21 =
        s.used21 < n21_ && state_valid(l + 1, State{s.used22, s.used21 + 1})
            ? at(l + 1, State{s.used22, s.used21 + 1})
            : 0;
    const std::uint64_t w11 =
        state_valid(l + 1, s) ? at(l + 1, s) : 0;
    std::uint64_t branch = rng.uniform_int(w22 + w21 + w11);
    if (branch < w22) {
      segment.push_back(StridePair{2, 2});
      ++s.used22;
    } else if (branch < w22 + w21) {
      segment.push_back(StridePair{2, 1});
      ++s.used21;
    } else {
      segment.push_back(StridePair{1, 1});
    }
  }
  return segment;
}

std::vector<StridePair> uniform_path_sample(const SpaceConfig& config, Rng& rng) {
  return PathLattice(config).sample_path(rng);
}

Architecture uniform_architecture(const SpaceConfig& config, Rng& rng) {
  Architecture arch;
  arch.strides = uniform_path_sample(config, rng);
  arch.ops.reserve(config.spatial_layers);
  for (int i = 0; i < config.spatial_layers; ++i)
    arch.ops.push_back(config.conv_choices[rng.uniform_int(config.conv_choices.size())]);
  arch.seq.reserve(config.sequential_layers);
  for (int i = 0; i < config.sequential_layers; ++i)
    arch.seq.push_back(
        TransformerChoice::from_index(static_cast<int>(rng.uniform_int(16))));
  return arch;
}

void for_each_architecture(const SpaceConfig& config, std::uint64_t cap,
                           const std::function<bool(const Architecture&)>& fn) {
  const Cardinality card = space_cardinality(config);
  if (card.total > mpz_class(static_cast<unsigned long>(cap)))
    throw ConfigError("space cardinality " + card.total.get_str() +
                      " exceeds enumeration cap " + std::to_string(cap));

  const int m = config.spatial_layers;
  const int n = config.sequential_layers;
  const int ops_k = static_cast<int>(config.conv_choices.size());
  Architecture arch;
  arch.ops.assign(m, config.conv_choices[0]);
  arch.seq.assign(n, TransformerChoice::from_index(0));
  std::vector<int> op_idx(m, 0), seq_idx(n, 0);
  bool stop = false;

  auto emit_choices = [&]() {
    std::fill(op_idx.begin(), op_idx.end(), 0);
    while (!stop) {
      for (int i = 0; i < m; ++i) arch.ops[i] = config.conv_choices[op_idx[i]];
      std::fill(seq_idx.begin(), seq_idx.end(), 0);
      while (!stop) {
        for (int i = 0; i < n; ++i)
          arch.seq[i] = TransformerChoice::from_index(seq_idx[i]);
        if (!fn(arch)) {
          stop = true;
          break;
        }
        int pos = n - 1;
        while (pos >= 0 && ++seq_idx[pos] == 16) seq_idx[pos--] = 0;
        if (pos < 0) break;
      }
      if (stop) break;
      int pos = m - 1;
      while (pos >= 0 && ++op_idx[pos] == ops_k) op_idx[pos--] = 0;
      if (pos < 0) break;
    }
  };

  // Strides in canonical branch order (2,2), (2,1), (1,1).
  const int want22 = config.n22();
  const int want21 = config.n21();
  arch.strides.assign(m, StridePair{1, 1});
  std::function<void(int, int, int)> walk = [&](int layer, int used22, int used21) {
    if (stop) return;
    if (layer == m) {
      if (used22 == want22 && used21 == want21) emit_choices();
      return;
    }
    const int remaining = m - layer;
    if (remaining < (want22 - used22) + (want21 - used21)) return;
    if (used22 < want22) {
      arch.strides[layer] = StridePair{2, 2};
      walk(layer + 1, used22 + 1, used21);
    }
    if (used21 < want21) {
      arch.strides[layer] = StridePair{2, 1};
      walk(layer + 1, used22, used21 + 1);
    }
    arch.strides[layer] = StridePair{1, 1};
    walk(layer + 1, used22, used21);
  };
  walk(0, 0, 0);
}

std::vector<Architecture> enumerate_architectures(const SpaceConfig& config,
                                                  std::uint64_t cap) {
  std::vector<Architecture> result;
  for_each_architecture(config, cap, [&](const Architecture& arch) {
    result.push_back(arch);
    return true;
  });
  return result;
}

}  // namespace meshnas
