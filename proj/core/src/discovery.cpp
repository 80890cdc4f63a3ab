#include "grader/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "grader/error.hpp"
#include "grader/stats.hpp"

namespace grader {

std::string to_string(Conditioning c) {
  switch (c) {
    case Conditioning::marginal: return "marginal";
    case Conditioning::all_other_sources: return "all_other_sources";
    case Conditioning::adaptive: return "adaptive";
  }
  return "?";
}

Conditioning parse_conditioning(const std::string& s) {
  if (s == "marginal") return Conditioning::marginal;
  if (s == "all_other_sources" || s == "all") return Conditioning::all_other_sources;
  if (s == "adaptive") return Conditioning::adaptive;
  throw ConfigError("unknown conditioning '" + s + "'");
}

void DiscoveryConfig::validate() const {
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("discovery: eta must be in (0, 1)");
  if (min_samples < 1) throw ConfigError("discovery: min_samples must be positive");
  if (max_condition_size < 0) throw ConfigError("discovery: max_condition_size must be nonnegative");
  if (!(candidate_eta > 0.0 && candidate_eta < 1.0)) throw ConfigError("discovery: candidate_eta must be in (0, 1)");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("discovery: holdout_fraction must be in (0, 1)");
  }
  if (regression_max_samples < 4) throw ConfigError("discovery: regression_max_samples too small");
}

void to_json(nlohmann::json& j, const DiscoveryConfig& c) {
  j = nlohmann::json{{"eta", c.eta},
                     {"conditioning", to_string(c.conditioning)},
                     {"min_samples", c.min_samples},
                     {"max_condition_size", c.max_condition_size},
                     {"candidate_eta", c.candidate_eta},
                     {"holdout_fraction", c.holdout_fraction},
                     {"tree_max_depth", c.tree.max_depth},
                     {"tree_min_leaf", c.tree.min_leaf},
                     {"regression_max_samples", c.regression_max_samples},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DiscoveryConfig& c) {
  c = DiscoveryConfig{};
  c.eta = j.value("eta", c.eta);
  if (j.contains("conditioning")) c.conditioning = parse_conditioning(j.at("conditioning").get<std::string>());
  c.min_samples = j.value("min_samples", c.min_samples);
  c.max_condition_size = j.value("max_condition_size", c.max_condition_size);
  c.candidate_eta = j.value("candidate_eta", c.candidate_eta);
  c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  c.tree.max_depth = j.value("tree_max_depth", c.tree.max_depth);
  c.tree.min_leaf = j.value("tree_min_leaf", c.tree.min_leaf);
  c.regression_max_samples = j.value("regression_max_samples", c.regression_max_samples);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

void to_json(nlohmann::json& j, const IndependenceTestResult& r) {
  j = nlohmann::json{{"source", r.source},
                     {"target", r.target},
                     {"p_value", r.p_value},
                     {"statistic", r.statistic},
                     {"test_kind", r.kind == TestKind::chi_squared ? "chi_squared" : "regression_conditional"},
                     {"n_samples", r.n_samples},
                     {"testable", r.testable},
                     {"conditioning", r.conditioning}};
  if (!r.note.empty()) j["note"] = r.note;
}

namespace {

bool constant(const std::vector<std::int64_t>& v) {
  return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}

}  // namespace

DiscoveryData::DiscoveryData(const ReplayBuffer& buffer, const DiscoveryConfig& config)
    : spaces_(buffer.spaces()), n_(static_cast<int>(buffer.size())) {
  const int M = spaces_.num_state_factors();
  const int S = spaces_.num_sources();
  all_discrete_ = spaces_.state.all_discrete() && spaces_.action.all_discrete();
  source_keys_.assign(S, std::vector<std::int64_t>(n_, 0));
  target_keys_.assign(M, std::vector<std::int64_t>(n_, 0));
  for (int k = 0; k < n_; ++k) {
    const auto& smp = buffer[k];
    for (int i = 0; i < S; ++i) {
      const FactorSpace& fs = spaces_.source(i);
      if (!fs.is_discrete()) continue;
      const auto v = i < M ? spaces_.state.view(smp.state.values, i) : spaces_.action.view(smp.action.values, i - M);
      source_keys_[i][k] = category_key(fs, v);
    }
    for (int j = 0; j < M; ++j) {
      if (!spaces_.state[j].is_discrete()) continue;
      target_keys_[j][k] = category_key(spaces_.state[j], spaces_.state.view(smp.next_state.values, j));
    }
  }
  source_const_.resize(S);
  target_const_.resize(M);
  for (int i = 0; i < S; ++i) source_const_[i] = constant(source_keys_[i]);
  for (int j = 0; j < M; ++j) target_const_[j] = constant(target_keys_[j]);

  if (all_discrete_ || n_ == 0) return;

  // Regression design on a seeded row subset.
  std::vector<int> rows(n_);
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(derive_seed(config.seed, 0x7265677265ULL));
  std::shuffle(rows.begin(), rows.end(), rng);
  const int m = std::min(n_, config.regression_max_samples);
  rows.resize(m);

  feature_columns_.resize(S);
  int cols = 0;
  for (int i = 0; i < S; ++i) {
    const int d = spaces_.source(i).encoded_dim();
    for (int c = 0; c < d; ++c) feature_columns_[i].push_back(cols + c);
    cols += d;
  }
  features_.resize(m, cols);
  target_values_.resize(M);
  for (int j = 0; j < M; ++j) target_values_[j].resize(m, spaces_.state[j].encoded_dim());
  std::vector<double> enc;
  for (int r = 0; r < m; ++r) {
    const auto& smp = buffer[rows[r]];
    for (int i = 0; i < S; ++i) {
      const FactorSpace& fs = spaces_.source(i);
      enc.assign(fs.encoded_dim(), 0.0);
      if (i < M) {
        spaces_.state.encode_factor(smp.state.values, i, enc);
      } else {
        spaces_.action.encode_factor(smp.action.values, i - M, enc);
      }
      for (int c = 0; c < fs.encoded_dim(); ++c) features_(r, feature_columns_[i][c]) = enc[c];
    }
    for (int j = 0; j < M; ++j) {
      enc.assign(spaces_.state[j].encoded_dim(), 0.0);
      spaces_.state.encode_factor(smp.next_state.values, j, enc);
      for (int c = 0; c < spaces_.state[j].encoded_dim(); ++c) target_values_[j](r, c) = enc[c];
    }
  }
  target_deltas_.resize(M);
  for (int j = 0; j < M; ++j) {
    if (spaces_.state[j].is_discrete()) continue;
    target_deltas_[j] = target_values_[j];
    for (int c = 0; c < spaces_.state[j].encoded_dim(); ++c)
      target_deltas_[j].col(c) -= features_.col(feature_columns_[j][c]);
  }
  const int n_test = std::max(1, static_cast<int>(std::lround(config.holdout_fraction * m)));
  for (int r = 0; r < m; ++r) (r < m - n_test ? train_rows_ : test_rows_).push_back(r);

  // Continuous factors count as varying unless all rows agree exactly.
  for (int i = 0; i < S; ++i) {
    if (spaces_.source(i).is_discrete()) continue;
    bool same = true;
    for (int c : feature_columns_[i]) same = same && (features_.col(c).array() == features_(0, c)).all();
    source_const_[i] = same;
  }
  for (int j = 0; j < M; ++j) {
    if (spaces_.state[j].is_discrete()) continue;
    const auto& t = target_values_[j];
    target_const_[j] = (t.rowwise() - t.row(0)).cwiseAbs().maxCoeff() == 0.0;
  }
}

bool DiscoveryData::source_constant(int i) const { return source_const_[i]; }
bool DiscoveryData::target_constant(int j) const { return target_const_[j]; }

namespace {

std::vector<std::int64_t> combine_keys(const DiscoveryData& data, const std::vector<int>& sources) {
  std::vector<std::int64_t> out(data.size(), 0);
  if (sources.empty()) return out;
  out = data.source_keys(sources[0]);
  for (std::size_t s = 1; s < sources.size(); ++s) {
    const auto& next = data.source_keys(sources[s]);
    std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> ids;
    for (int k = 0; k < data.size(); ++k) {
      auto [it, inserted] = ids.try_emplace({out[k], next[k]}, static_cast<std::int64_t>(ids.size()));
      out[k] = it->second;
    }
  }
  return out;
}

// Held-out per-sample squared error of a tree fitted on the given source
// features.
Eigen::VectorXd heldout_errors(const DiscoveryData& data, const Eigen::MatrixXd& Y, const std::vector<int>& sources,
                               const DiscoveryConfig& config) {
  std::vector<int> features;
  for (int s : sources) {
    const auto& c = data.feature_columns(s);
    features.insert(features.end(), c.begin(), c.end());
  }
  stats::RegressionTree tree;
  tree.fit(data.features(), Y, data.train_rows(), features, config.tree);
  const auto& test = data.test_rows();
  Eigen::VectorXd e(static_cast<Eigen::Index>(test.size()));
  for (std::size_t k = 0; k < test.size(); ++k) {
    e(static_cast<Eigen::Index>(k)) = (tree.predict(data.features(), test[k]) - Y.row(test[k]).transpose()).squaredNorm();
  }
  return e;
}

}  // namespace

IndependenceTestResult test_edge_given(const DiscoveryData& data, int i, int j, const std::vector<int>& conditioning,
                                       const DiscoveryConfig& config) {
  const MdpSpaces& sp = data.spaces();
  if (i < 0 || i >= sp.num_sources() || j < 0 || j >= sp.num_state_factors()) {
    throw RangeError("test_edge: source or target index out of range");
  }
  IndependenceTestResult r;
  r.source = i;
  r.target = j;
  r.conditioning = conditioning;
  r.n_samples = data.size();
  bool discrete = sp.source(i).is_discrete() && sp.state[j].is_discrete();
  for (int c : conditioning) {
    if (c == i) throw ConfigError("test_edge: conditioning set contains the tested source");
    discrete = discrete && sp.source(c).is_discrete();
  }
  r.kind = discrete ? TestKind::chi_squared : TestKind::regression_conditional;

  if (data.size() < config.min_samples) {
    r.testable = false;
    r.note = "insufficient samples (" + std::to_string(data.size()) + " < " + std::to_string(config.min_samples) + ")";
    return r;
  }
  if (data.source_constant(i) || data.target_constant(j)) {
    r.testable = false;
    r.note = "no variation in " + std::string(data.source_constant(i) ? "source" : "target");
    return r;
  }

  if (discrete) {
    const auto strata = combine_keys(data, conditioning);
    const auto res = stats::chi_square_independence(data.source_keys(i), data.target_keys(j),
                                                    conditioning.empty() ? std::span<const std::int64_t>{}
                                                                         : std::span<const std::int64_t>(strata));
    r.statistic = res.statistic;
    r.p_value = res.p_value;
    if (!conditioning.empty()) r.n_samples = static_cast<int>(res.informative_samples);
    if (res.informative_samples < config.min_samples) {
      r.testable = false;
      r.note = "conditioning leaves " + std::to_string(res.informative_samples) + " informative samples";
      r.p_value = 1.0;
    }
    return r;
  }

  std::vector<int> without(conditioning.begin(), conditioning.end());
  std::vector<int> with = without;
  with.push_back(i);
  std::sort(with.begin(), with.end());
  std::sort(without.begin(), without.end());
  const bool own_conditioned = std::binary_search(without.begin(), without.end(), j);
  const Eigen::MatrixXd& Y =
      own_conditioned && !sp.state[j].is_discrete() ? data.target_deltas(j) : data.target_values(j);
  const Eigen::VectorXd e_without = heldout_errors(data, Y, without, config);
  const Eigen::VectorXd e_with = heldout_errors(data, Y, with, config);
  const auto t = stats::paired_t_test_greater(std::span<const double>(e_without.data(), e_without.size()),
                                              std::span<const double>(e_with.data(), e_with.size()));
  r.statistic = t.t;
  r.p_value = t.p_value;
  r.n_samples = t.n;
  return r;
}

namespace {

std::vector<int> other_sources(int num_sources, int i) {
  std::vector<int> s;
  for (int k = 0; k < num_sources; ++k)
    if (k != i) s.push_back(k);
  return s;
}

// Largest p-value over `base` extended by every subset of `pool` up to the
// configured size. Untestable conditioning sets are skipped.
IndependenceTestResult max_over_subsets(const DiscoveryData& data, int i, int j, const std::vector<int>& base,
                                        const std::vector<int>& pool, const DiscoveryConfig& config) {
  IndependenceTestResult best = test_edge_given(data, i, j, base, config);
  if (!best.testable) return best;
  std::vector<int> choose;
  const int P = static_cast<int>(pool.size());
  const int max_k = std::min(config.max_condition_size, P);
  for (int k = 1; k <= max_k && best.p_value < 1.0; ++k) {
    std::vector<bool> mask(P, false);
    std::fill(mask.begin(), mask.begin() + k, true);
    do {
      std::vector<int> cond = base;
      for (int q = 0; q < P; ++q)
        if (mask[q]) cond.push_back(pool[q]);
      std::sort(cond.begin(), cond.end());
      const auto r = test_edge_given(data, i, j, cond, config);
      if (r.testable && r.p_value > best.p_value) best = r;
    } while (best.p_value < 1.0 && std::prev_permutation(mask.begin(), mask.end()));
  }
  return best;
}

std::vector<int> own_base(int i, int j) { return i == j ? std::vector<int>{} : std::vector<int>{j}; }

// Candidate conditioning variables for target j: sources other than i and j
// whose own-conditioned test rejects at candidate_eta.
std::vector<int> candidate_pool(const std::vector<IndependenceTestResult>& stage_a, int i, int j,
                                const DiscoveryConfig& config) {
  std::vector<int> pool;
  for (const auto& r : stage_a) {
    if (r.source == i || r.source == j) continue;
    if (r.testable && r.p_value < config.candidate_eta) pool.push_back(r.source);
  }
  return pool;
}

}  // namespace

IndependenceTestResult test_edge(const DiscoveryData& data, int i, int j, const DiscoveryConfig& config) {
  const int S = data.spaces().num_sources();
  switch (config.conditioning) {
    case Conditioning::marginal: return test_edge_given(data, i, j, {}, config);
    case Conditioning::all_other_sources: return test_edge_given(data, i, j, other_sources(S, i), config);
    case Conditioning::adaptive: break;
  }
  if (!data.all_discrete()) return test_edge_given(data, i, j, other_sources(S, i), config);
  std::vector<IndependenceTestResult> stage_a;
  for (int k = 0; k < S; ++k) stage_a.push_back(test_edge_given(data, k, j, own_base(k, j), config));
  return max_over_subsets(data, i, j, own_base(i, j), candidate_pool(stage_a, i, j, config), config);
}

IndependenceTestResult test_edge(const ReplayBuffer& buffer, int i, int j, const DiscoveryConfig& config) {
  config.validate();
  const DiscoveryData data(buffer, config);
  return test_edge(data, i, j, config);
}

DiscoveryReport discover_report(const ReplayBuffer& buffer, const DiscoveryConfig& config) {
  config.validate();
  const MdpSpaces& sp = buffer.spaces();
  const int M = sp.num_state_factors();
  const int S = sp.num_sources();
  DiscoveryReport rep;
  rep.config = config;
  rep.n_samples = static_cast<int>(buffer.size());
  rep.graph = TransitionCausalGraph(M, sp.num_action_factors());
  attach_names(rep.graph, sp);
  rep.tests.resize(static_cast<std::size_t>(S) * M);
  if (buffer.empty()) {
    for (int i = 0; i < S; ++i) {
      for (int j = 0; j < M; ++j) {
        IndependenceTestResult& r = rep.tests[static_cast<std::size_t>(i) * M + j];
        r.source = i;
        r.target = j;
        r.testable = false;
        r.n_samples = 0;
        r.note = "empty buffer";
      }
    }
    rep.warnings.push_back("empty buffer: every edge untestable");
    return rep;
  }

  const DiscoveryData data(buffer, config);
  const bool adaptive = config.conditioning == Conditioning::adaptive && data.all_discrete();
  for (int j = 0; j < M; ++j) {
    std::vector<IndependenceTestResult> stage_a;
    if (adaptive) {
      for (int k = 0; k < S; ++k) stage_a.push_back(test_edge_given(data, k, j, own_base(k, j), config));
    }
    for (int i = 0; i < S; ++i) {
      IndependenceTestResult r =
          adaptive ? max_over_subsets(data, i, j, own_base(i, j), candidate_pool(stage_a, i, j, config), config)
                   : test_edge(data, i, j, config);
      if (!r.testable) {
        rep.warnings.push_back("edge " + sp.source(i).name + " -> " + sp.state[j].name + "': untestable, " + r.note);
      }
      rep.graph.set_edge(i, j, r.testable && r.p_value < config.eta);
      rep.tests[static_cast<std::size_t>(i) * M + j] = std::move(r);
    }
  }
  return rep;
}

TransitionCausalGraph discover(const ReplayBuffer& buffer, const DiscoveryConfig& config) {
  return discover_report(buffer, config).graph;
}

nlohmann::json to_json(const DiscoveryReport& r) {
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& t : r.tests) tests.push_back(t);
  return {{"format", "grader-discovery"}, {"config", r.config}, {"n_samples", r.n_samples},
          {"graph", r.graph},             {"tests", tests},     {"warnings", r.warnings}};
}

double kl_sparsity(const TransitionCausalGraph& g, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 0.5)) throw DomainError("kl_sparsity: epsilon must be in (0, 0.5]");
  return std::log((1.0 - epsilon) / epsilon) * g.edge_count();
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

ScoreResult discover_score(const ReplayBuffer& buffer, const ScoreConfig& config, std::uint64_t seed) {
  if (config.steps < 1) throw ConfigError("discover_score: steps must be at least 1");
  if (buffer.empty()) throw EmptyBufferError("discover_score: empty buffer");
  const MdpSpaces& sp = buffer.spaces();
  const int M = sp.num_state_factors();
  const int N = sp.num_action_factors();
  DynamicsConfig dc = config.dynamics;
  dc.seed = derive_seed(seed, 1);
  FactoredDynamicsModel model(sp, full_graph(M, N), dc);

  std::vector<std::size_t> all(buffer.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const EncodedBatch full = encode_samples(sp, buffer, all);
  const int B = std::min<int>(config.batch_size, static_cast<int>(buffer.size()));

  // Gate logits per target, aligned with that predictor's parent order.
  std::vector<std::vector<double>> w(M), m1(M), m2(M), gates(M), ggrad(M);
  std::vector<ParamVector> pgrad(M);
  for (int j = 0; j < M; ++j) {
    const std::size_t P = model.predictor(j).parents().size();
    w[j].assign(P, config.init_logit);
    m1[j].assign(P, 0.0);
    m2[j].assign(P, 0.0);
    gates[j].resize(P);
    ggrad[j].resize(P);
    pgrad[j].resize(model.predictor(j).params().size());
  }

  ScoreResult res{SoftAdjacency(M, N), TransitionCausalGraph(M, N), {}};
  Rng rng(derive_seed(seed, 2));
  std::uniform_int_distribution<int> pick(0, static_cast<int>(buffer.size()) - 1);
  std::vector<int> cols(B);
  const double b1 = 0.9, b2 = 0.999;
  for (int step = 1; step <= config.steps; ++step) {
    for (auto& c : cols) c = pick(rng);
    const EncodedBatch mb = gather(full, cols);
    double total = 0.0;
    for (int j = 0; j < M; ++j) {
      NodePredictor& p = model.predictor(j);
      for (std::size_t q = 0; q < w[j].size(); ++q) gates[j][q] = sigmoid(w[j][q]);
      total += p.loss(mb, pgrad[j], gates[j], ggrad[j]);
      p.apply_gradient(pgrad[j], config.learning_rate, dc.optimizer);
      const double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
      for (std::size_t q = 0; q < w[j].size(); ++q) {
        const double g = gates[j][q];
        total += config.sparsity_lambda * g;
        const double d = (ggrad[j][q] + config.sparsity_lambda) * g * (1.0 - g);
        m1[j][q] = b1 * m1[j][q] + (1.0 - b1) * d;
        m2[j][q] = b2 * m2[j][q] + (1.0 - b2) * d * d;
        w[j][q] -= config.gate_learning_rate * (m1[j][q] / c1) / (std::sqrt(m2[j][q] / c2) + 1e-8);
      }
    }
    if (!std::isfinite(total)) {
      throw OptimizationError("discover_score: non-finite loss at step " + std::to_string(step));
    }
    res.loss_curve.push_back(total);
  }
  for (int j = 0; j < M; ++j) {
    const auto& parents = model.predictor(j).parents();
    for (std::size_t q = 0; q < parents.size(); ++q) res.soft.set_weight(parents[q], j, sigmoid(w[j][q]));
  }
  res.graph = threshold_soft(res.soft, config.cutoff);
  attach_names(res.graph, sp);
  return res;
}

ReplayBuffer collect_random(const EnvConfig& env_config, int n_episodes, std::uint64_t seed, std::size_t capacity) {
  if (n_episodes < 0) throw ConfigError("collect_random: negative episode count");
  auto env = make_environment(env_config);
  if (capacity == 0) capacity = std::max<std::size_t>(1, static_cast<std::size_t>(n_episodes) * env->max_steps());
  ReplayBuffer buffer(env->spaces(), capacity);
  Rng rng(derive_seed(seed, 3));
  for (int e = 0; e < n_episodes; ++e) {
    const ResetResult start = env->reset(derive_seed(seed, 4, static_cast<std::uint64_t>(e)));
    FactoredState s = start.state;
    for (;;) {
      const FactoredAction a = random_action(env->spaces().action, rng);
      const StepResult st = env->step(a);
      buffer.push(TransitionSample{s, a, st.next_state, start.goal, st.reward, st.terminal, e});
      s = st.next_state;
      if (st.terminal) break;
    }
  }
  return buffer;
}

DiscoveryReport discover_offline(const EnvConfig& env_config, int n_episodes, const DiscoveryConfig& config,
                                 std::uint64_t seed, std::size_t capacity) {
  return discover_report(collect_random(env_config, n_episodes, seed, capacity), config);
}

}  // namespace grader
