#include "grader/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "grader/error.hpp"
#include "grader/rng.hpp"

namespace grader {

void to_json(nlohmann::json& j, const DynamicsConfig& c) {
  j = nlohmann::json{{"hidden_size", c.hidden_size},
                     {"sigma", c.sigma},
                     {"seed", c.seed},
                     {"optimizer",
                      {{"kind", c.optimizer.kind == OptimizerConfig::Kind::adam ? "adam" : "sgd"},
                       {"momentum", c.optimizer.momentum},
                       {"beta1", c.optimizer.beta1},
                       {"beta2", c.optimizer.beta2},
                       {"epsilon", c.optimizer.epsilon},
                       {"clip_norm", c.optimizer.clip_norm}}}};
}

void from_json(const nlohmann::json& j, DynamicsConfig& c) {
  c = DynamicsConfig{};
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.sigma = j.value("sigma", c.sigma);
  c.seed = j.value("seed", c.seed);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    const std::string kind = o.value("kind", std::string("adam"));
    if (kind == "adam") {
      c.optimizer.kind = OptimizerConfig::Kind::adam;
    } else if (kind == "sgd") {
      c.optimizer.kind = OptimizerConfig::Kind::sgd;
    } else {
      throw ConfigError("unknown optimizer kind '" + kind + "'");
    }
    c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
    c.optimizer.clip_norm = o.value("clip_norm", c.optimizer.clip_norm);
  }
}

namespace {

// Encodes factor `i` of `layout` from the raw rows of `raw` (width x K).
Eigen::MatrixXd encode_block(const FactorLayout& layout, int i, const Eigen::MatrixXd& raw) {
  const FactorSpace& s = layout[i];
  const int off = layout.offset(i);
  const int K = static_cast<int>(raw.cols());
  Eigen::MatrixXd enc = Eigen::MatrixXd::Zero(s.encoded_dim(), K);
  if (s.is_discrete()) {
    const int per = s.zero_first ? s.cardinality - 1 : s.cardinality;
    for (int k = 0; k < K; ++k) {
      for (int l = 0; l < s.length; ++l) {
        int c = static_cast<int>(raw(off + l, k));
        if (s.zero_first) {
          if (c == 0) continue;
          --c;
        }
        enc(l * per + c, k) = 1.0;
      }
    }
  } else {
    for (int d = 0; d < s.width(); ++d) {
      const double lo = s.lo[d];
      const double scale = 2.0 / (s.hi[d] - lo);
      enc.row(d) = ((raw.row(off + d).array() - lo) * scale - 1.0).matrix();
    }
  }
  return enc;
}

Eigen::MatrixXd target_block(const FactorLayout& layout, int j, const Eigen::MatrixXd& raw) {
  const FactorSpace& s = layout[j];
  if (s.is_discrete()) return raw.middleRows(layout.offset(j), s.width());
  return encode_block(layout, j, raw);
}

Eigen::MatrixXd columns(std::span<const TransitionSample> samples, int width, int which) {
  Eigen::MatrixXd m(width, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& v = which == 0 ? samples[k].state.values
                    : which == 1 ? samples[k].action.values
                                 : samples[k].next_state.values;
    if (static_cast<int>(v.size()) != width) throw ModelInputError("encode_samples: sample width mismatch");
    m.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(v.data(), width);
  }
  return m;
}

EncodedBatch encode_columns(const MdpSpaces& spaces, const Eigen::MatrixXd& s, const Eigen::MatrixXd& a,
                            const Eigen::MatrixXd* next) {
  EncodedBatch b;
  b.size = static_cast<int>(s.cols());
  const int M = spaces.num_state_factors();
  b.sources.reserve(spaces.num_sources());
  for (int i = 0; i < M; ++i) b.sources.push_back(encode_block(spaces.state, i, s));
  for (int i = 0; i < spaces.num_action_factors(); ++i) b.sources.push_back(encode_block(spaces.action, i, a));
  if (next) {
    b.targets.reserve(M);
    for (int j = 0; j < M; ++j) b.targets.push_back(target_block(spaces.state, j, *next));
  }
  return b;
}

}  // namespace

EncodedBatch encode_samples(const MdpSpaces& spaces, std::span<const TransitionSample> samples) {
  const Eigen::MatrixXd s = columns(samples, spaces.state.width(), 0);
  const Eigen::MatrixXd a = columns(samples, spaces.action.width(), 1);
  const Eigen::MatrixXd n = columns(samples, spaces.state.width(), 2);
  return encode_columns(spaces, s, a, &n);
}

EncodedBatch encode_samples(const MdpSpaces& spaces, const ReplayBuffer& buffer, std::span<const std::size_t> rows) {
  std::vector<TransitionSample> picked;
  picked.reserve(rows.size());
  for (auto r : rows) picked.push_back(buffer[r]);
  return encode_samples(spaces, picked);
}

EncodedBatch encode_sources(const MdpSpaces& spaces, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
  if (states.rows() != spaces.state.width() || actions.rows() != spaces.action.width() ||
      states.cols() != actions.cols()) {
    throw ModelInputError("encode_sources: state/action matrix shape mismatch");
  }
  return encode_columns(spaces, states, actions, nullptr);
}

EncodedBatch gather(const EncodedBatch& full, std::span<const int> cols) {
  EncodedBatch b;
  b.size = static_cast<int>(cols.size());
  const std::vector<int> idx(cols.begin(), cols.end());
  b.sources.reserve(full.sources.size());
  for (const auto& m : full.sources) b.sources.emplace_back(m(Eigen::all, idx));
  b.targets.reserve(full.targets.size());
  for (const auto& m : full.targets) b.targets.emplace_back(m(Eigen::all, idx));
  return b;
}

FactoredDynamicsModel::FactoredDynamicsModel(MdpSpaces spaces, TransitionCausalGraph graph, DynamicsConfig config)
    : spaces_(std::move(spaces)), graph_(std::move(graph)), config_(config) {
  if (graph_.num_state() != spaces_.num_state_factors() || graph_.num_action() != spaces_.num_action_factors()) {
    throw DimensionError("FactoredDynamicsModel: graph shape does not match factor spaces");
  }
  if (!(config_.sigma > 0.0)) throw ConfigError("FactoredDynamicsModel: sigma must be positive");
  const int M = spaces_.num_state_factors();
  generation_.assign(M, 0);
  predictors_.reserve(M);
  for (int j = 0; j < M; ++j) {
    predictors_.emplace_back(spaces_, j, config_.hidden_size, parents_of(graph_, j), predictor_seed(j));
    predictors_.back().sigma_ = config_.sigma;
  }
}

std::uint64_t FactoredDynamicsModel::predictor_seed(int target) const {
  return derive_seed(config_.seed, static_cast<std::uint64_t>(target),
                     static_cast<std::uint64_t>(generation_[target]));
}

std::size_t FactoredDynamicsModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : predictors_) n += p.params().size();
  return n;
}

void FactoredDynamicsModel::decode_deterministic(int j, const Eigen::MatrixXd& out, const Eigen::MatrixXd& states,
                                                 Eigen::MatrixXd& next) const {
  (void)states;
  const FactorSpace& s = spaces_.state[j];
  const int off = spaces_.state.offset(j);
  const int K = static_cast<int>(out.cols());
  if (s.is_discrete()) {
    const int C = s.cardinality;
    for (int k = 0; k < K; ++k) {
      for (int l = 0; l < s.length; ++l) {
        int best = 0;
        double bv = out(l * C, k);
        for (int c = 1; c < C; ++c) {
          if (out(l * C + c, k) > bv) {
            bv = out(l * C + c, k);
            best = c;
          }
        }
        next(off + l, k) = best;
      }
    }
  } else {
    for (int d = 0; d < s.width(); ++d) {
      for (int k = 0; k < K; ++k) next(off + d, k) = denormalize(std::clamp(out(d, k), -1.0, 1.0), s.lo[d], s.hi[d]);
    }
  }
}

FactoredState FactoredDynamicsModel::predict(const FactoredState& state, const FactoredAction& action, PredictMode mode,
                                             std::uint64_t seed) const {
  if (static_cast<int>(state.width()) != spaces_.state.width() ||
      static_cast<int>(action.width()) != spaces_.action.width()) {
    throw ModelInputError("predict: state/action dimension mismatch");
  }
  const Eigen::MatrixXd s = Eigen::Map<const Eigen::VectorXd>(state.values.data(), spaces_.state.width());
  const Eigen::MatrixXd a = Eigen::Map<const Eigen::VectorXd>(action.values.data(), spaces_.action.width());
  const EncodedBatch batch = encode_sources(spaces_, s, a);
  Eigen::MatrixXd next = s;
  Rng rng(seed);
  for (int j = 0; j < num_targets(); ++j) {
    const Eigen::MatrixXd out = predictors_[j].output(batch);
    if (mode == PredictMode::deterministic) {
      decode_deterministic(j, out, s, next);
      continue;
    }
    const FactorSpace& fs = spaces_.state[j];
    const int off = spaces_.state.offset(j);
    if (fs.is_discrete()) {
      const int C = fs.cardinality;
      for (int l = 0; l < fs.length; ++l) {
        const Eigen::VectorXd logits = out.col(0).segment(l * C, C);
        const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
        std::discrete_distribution<int> dist(e.data(), e.data() + C);
        next(off + l, 0) = dist(rng);
      }
    } else {
      std::normal_distribution<double> noise(0.0, config_.sigma);
      for (int d = 0; d < fs.width(); ++d) {
        const double z = std::clamp(out(d, 0) + noise(rng), -1.0, 1.0);
        next(off + d, 0) = denormalize(z, fs.lo[d], fs.hi[d]);
      }
    }
  }
  return FactoredState(std::vector<double>(next.data(), next.data() + next.size()));
}

void FactoredDynamicsModel::predict_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                          Eigen::MatrixXd& next, const std::vector<bool>& targets) const {
  const EncodedBatch batch = encode_sources(spaces_, states, actions);
  next = states;
  for (int j = 0; j < num_targets(); ++j) {
    if (!targets.empty() && !targets[j]) continue;
    decode_deterministic(j, predictors_[j].output(batch), states, next);
  }
}

std::vector<double> FactoredDynamicsModel::factor_log_likelihood(const EncodedBatch& batch) const {
  if (batch.size < 1) throw EmptyBufferError("log_likelihood: empty batch");
  std::vector<double> ll(num_targets());
  for (int j = 0; j < num_targets(); ++j) {
    ll[j] = -predictors_[j].sample_nll(batch).mean();
    if (!std::isfinite(ll[j])) {
      throw NumericError("log_likelihood: non-finite value for factor '" + spaces_.state[j].name + "'", j);
    }
  }
  return ll;
}

double FactoredDynamicsModel::log_likelihood(const EncodedBatch& batch) const {
  const auto ll = factor_log_likelihood(batch);
  return std::accumulate(ll.begin(), ll.end(), 0.0);
}

double FactoredDynamicsModel::log_likelihood(std::span<const TransitionSample> batch) const {
  if (batch.empty()) throw EmptyBufferError("log_likelihood: empty batch");
  return log_likelihood(encode_samples(spaces_, batch));
}

TrainingReport FactoredDynamicsModel::train_epochs(const ReplayBuffer& buffer, int epochs, int batch_size,
                                                   double learning_rate, std::uint64_t seed) {
  TrainingReport report;
  if (epochs < 0) throw ConfigError("train_epochs: epochs must be nonnegative");
  if (epochs == 0) return report;
  if (buffer.empty()) throw EmptyBufferError("train_epochs: empty buffer");
  if (batch_size < 1 || static_cast<std::size_t>(batch_size) > buffer.size()) {
    throw ConfigError("train_epochs: batch size must be in [1, buffer size]");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("train_epochs: learning rate must be positive");

  const int n = static_cast<int>(buffer.size());
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const EncodedBatch full = encode_samples(spaces_, buffer, all);

  std::vector<int> train_rows, val_rows;
  for (int k = 0; k < n; ++k) (k % 10 == 9 ? val_rows : train_rows).push_back(k);
  if (train_rows.empty()) train_rows = val_rows;
  const EncodedBatch val = val_rows.empty() ? EncodedBatch{} : gather(full, val_rows);

  const long steps_per_epoch = (n + batch_size - 1) / batch_size;
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, train_rows.size() - 1);
  std::vector<int> cols(batch_size);
  std::vector<ParamVector> grads(num_targets());
  for (int j = 0; j < num_targets(); ++j) grads[j].resize(predictors_[j].params().size());

  for (int e = 0; e < epochs; ++e) {
    for (long s = 0; s < steps_per_epoch; ++s) {
      for (auto& c : cols) c = train_rows[pick(rng)];
      const EncodedBatch mb = gather(full, cols);
      double total = 0.0;
      for (int j = 0; j < num_targets(); ++j) {
        const double l = predictors_[j].loss(mb, grads[j]);
        if (!std::isfinite(l)) {
          throw OptimizationError("train_epochs: non-finite loss for factor '" + spaces_.state[j].name +
                                  "' at step " + std::to_string(report.steps));
        }
        predictors_[j].apply_gradient(grads[j], learning_rate, config_.optimizer);
        total += l;
      }
      report.loss_curve.push_back(total);
      ++report.steps;
    }
    if (val.size > 0) {
      const double v = -log_likelihood(val);
      if (!std::isfinite(v)) throw OptimizationError("train_epochs: non-finite validation loss");
      report.validation_nll.push_back(v);
    }
  }
  return report;
}

GradientCheckReport FactoredDynamicsModel::gradient_check(std::span<const TransitionSample> samples, double epsilon,
                                                          double tolerance, int n_params, std::uint64_t seed) {
  GradientCheckReport report;
  if (!(epsilon > 0.0)) throw ConfigError("gradient_check: epsilon must be positive");
  if (n_params <= 0) return report;
  if (samples.empty()) throw EmptyBufferError("gradient_check: empty batch");
  const EncodedBatch batch = encode_samples(spaces_, samples);

  const std::size_t total = parameter_count();
  if (total == 0) return report;
  Rng rng(seed);
  std::vector<ParamVector> grads(num_targets());
  for (int j = 0; j < num_targets(); ++j) {
    grads[j].resize(predictors_[j].params().size());
    predictors_[j].loss(batch, grads[j]);
  }
  for (int c = 0; c < n_params; ++c) {
    std::size_t flat = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng);
    int j = 0;
    while (flat >= predictors_[j].params().size()) flat -= predictors_[j].params().size(), ++j;
    NodePredictor& p = predictors_[j];
    double& w = p.params()[flat];
    const double saved = w;
    w = saved + epsilon;
    const double up = p.loss(batch, {});
    w = saved - epsilon;
    const double down = p.loss(batch, {});
    w = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double analytic = grads[j][flat];
    // Floor keeps parameters with vanishing gradient from dividing roundoff
    // by ~0.
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.checked;
    if (rel >= report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_parameter = spaces_.state[j].name + "/" + p.param_name(flat);
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

std::vector<int> FactoredDynamicsModel::rebuild_for_graph(const TransitionCausalGraph& graph) {
  if (!graph.same_shape(graph_)) throw DimensionError("rebuild_for_graph: graph shape mismatch");
  std::vector<int> changed;
  for (int j = 0; j < num_targets(); ++j) {
    auto parents = parents_of(graph, j);
    if (parents == predictors_[j].parents()) continue;
    ++generation_[j];
    predictors_[j] = NodePredictor(spaces_, j, config_.hidden_size, std::move(parents), predictor_seed(j));
    predictors_[j].sigma_ = config_.sigma;
    changed.push_back(j);
  }
  graph_ = graph;
  return changed;
}

nlohmann::json FactoredDynamicsModel::to_checkpoint() const {
  nlohmann::json preds = nlohmann::json::array();
  for (int j = 0; j < num_targets(); ++j) {
    preds.push_back({{"target", j},
                     {"parents", predictors_[j].parents()},
                     {"generation", generation_[j]},
                     {"params", predictors_[j].params()}});
  }
  return {{"format", "grader-dynamics"}, {"version", 1}, {"spaces", spaces_},
          {"graph", graph_},             {"config", config_}, {"predictors", preds}};
}

FactoredDynamicsModel FactoredDynamicsModel::from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "grader-dynamics") throw ConfigError("checkpoint: not a dynamics checkpoint");
  FactoredDynamicsModel m(j.at("spaces").get<MdpSpaces>(), j.at("graph").get<TransitionCausalGraph>(),
                          j.at("config").get<DynamicsConfig>());
  const auto& preds = j.at("predictors");
  if (static_cast<int>(preds.size()) != m.num_targets()) throw ConfigError("checkpoint: predictor count mismatch");
  for (int t = 0; t < m.num_targets(); ++t) {
    const auto& p = preds[t];
    if (p.at("parents").get<std::vector<int>>() != m.predictors_[t].parents()) {
      throw ConfigError("checkpoint: predictor parents do not match the graph");
    }
    auto params = p.at("params").get<std::vector<double>>();
    if (params.size() != m.predictors_[t].params().size()) throw ConfigError("checkpoint: parameter count mismatch");
    m.predictors_[t].params().assign(params.begin(), params.end());
    m.generation_[t] = p.value("generation", 0);
  }
  return m;
}

void FactoredDynamicsModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out << to_checkpoint().dump() << '\n';
}

FactoredDynamicsModel FactoredDynamicsModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 1, e.what());
  }
  return from_checkpoint(j);
}

std::vector<bool> relevant_targets(const TransitionCausalGraph& graph, const Goal& goal) {
  const int M = graph.num_state();
  std::vector<bool> need(M, false);
  std::vector<int> stack;
  for (const auto& t : goal.terms) {
    if (t.factor >= 0 && t.factor < M && !need[t.factor]) {
      need[t.factor] = true;
      stack.push_back(t.factor);
    }
  }
  while (!stack.empty()) {
    const int j = stack.back();
    stack.pop_back();
    for (int i = 0; i < M; ++i) {
      if (graph.edge(i, j) && !need[i]) {
        need[i] = true;
        stack.push_back(i);
      }
    }
  }
  return need;
}

}  // namespace grader
