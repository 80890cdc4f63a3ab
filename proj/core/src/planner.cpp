#include "grader/planner.hpp"

#include "grader/error.hpp"

namespace grader {

void PlannerConfig::validate() const {
  if (horizon < 1) throw ConfigError("planner: horizon must be positive");
  if (population < 1) throw ConfigError("planner: population must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("planner: gamma must be in (0, 1]");
  if (!(epsilon_greedy >= 0.0 && epsilon_greedy <= 1.0)) throw ConfigError("planner: epsilon must be in [0, 1]");
}

PlannerConfig default_planner_config(EnvKind env) {
  switch (env) {
    case EnvKind::stack: return {5, 500, 0.99, 0.4, true};
    case EnvKind::unlock: return {10, 100, 0.99, 0.4, true};
    case EnvKind::crash: return {20, 1000, 0.99, 0.5, true};
  }
  return {};
}

void to_json(nlohmann::json& j, const PlannerConfig& c) {
  j = nlohmann::json{{"horizon", c.horizon},
                     {"population", c.population},
                     {"gamma", c.gamma},
                     {"epsilon_greedy", c.epsilon_greedy},
                     {"use_action_cost", c.use_action_cost}};
}

void from_json(const nlohmann::json& j, PlannerConfig& c) {
  c.horizon = j.value("horizon", c.horizon);
  c.population = j.value("population", c.population);
  c.gamma = j.value("gamma", c.gamma);
  c.epsilon_greedy = j.value("epsilon_greedy", c.epsilon_greedy);
  c.use_action_cost = j.value("use_action_cost", c.use_action_cost);
  c.validate();
}

void LearnedRolloutModel::step(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions, Eigen::MatrixXd& next) {
  model_.predict_batch(states, actions, next, targets_);
}

void PerfectRolloutModel::step(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions, Eigen::MatrixXd& next) {
  next.resize(states.rows(), states.cols());
  for (Eigen::Index k = 0; k < states.cols(); ++k) {
    const FactoredState s(std::vector<double>(states.col(k).data(), states.col(k).data() + states.rows()));
    const FactoredAction a(std::vector<double>(actions.col(k).data(), actions.col(k).data() + actions.rows()));
    const FactoredState n = env_.transition(s, a);
    next.col(k) = Eigen::Map<const Eigen::VectorXd>(n.values.data(), states.rows());
  }
}

FactoredAction ActionSequences::action(int t, int k) const {
  const auto col = steps.at(t).col(k);
  return FactoredAction(std::vector<double>(col.data(), col.data() + col.size()));
}

ActionSequences sample_sequences(const FactorLayout& actions, int population, int horizon, Rng& rng) {
  ActionSequences seqs;
  seqs.steps.assign(horizon, Eigen::MatrixXd(actions.width(), population));
  // Sequence-major draw order, so sequence k is the same for any horizon
  // prefix and population suffix.
  for (int k = 0; k < population; ++k) {
    for (int t = 0; t < horizon; ++t) {
      for (int i = 0; i < actions.size(); ++i) {
        const FactorSpace& s = actions[i];
        const int off = actions.offset(i);
        for (int c = 0; c < s.width(); ++c) {
          seqs.steps[t](off + c, k) =
              s.is_discrete() ? uniform_int(rng, 0, s.cardinality - 1) : uniform_real(rng, s.lo[c], s.hi[c]);
        }
      }
    }
  }
  return seqs;
}

Eigen::VectorXd evaluate_sequences(RolloutModel& model, const FactoredState& start, const Goal& goal,
                                   const ActionSequences& seqs, double gamma, const ActionCost& cost) {
  const MdpSpaces& sp = model.spaces();
  if (static_cast<int>(start.width()) != sp.state.width()) throw ModelInputError("rollout: state width mismatch");
  goal.validate(sp.state);
  const int K = seqs.population();
  const int Ws = sp.state.width();
  Eigen::VectorXd value = Eigen::VectorXd::Zero(K);
  std::vector<bool> alive(K, true);
  Eigen::MatrixXd states = Eigen::Map<const Eigen::VectorXd>(start.values.data(), Ws).replicate(1, K);
  Eigen::MatrixXd next;
  model.prepare(goal);
  double discount = 1.0;
  for (int t = 0; t < seqs.horizon(); ++t) {
    const Eigen::MatrixXd& A = seqs.steps[t];
    if (A.rows() != sp.action.width()) throw ModelInputError("rollout: action width mismatch");
    model.step(states, A, next);
    bool any = false;
    for (int k = 0; k < K; ++k) {
      if (!alive[k]) continue;
      if (cost) value(k) -= discount * cost(std::span<const double>(A.col(k).data(), A.rows()));
      if (goal_satisfied(sp.state, std::span<const double>(next.col(k).data(), Ws), goal)) {
        value(k) += discount;
        alive[k] = false;
      }
      any = any || alive[k];
    }
    if (!any) break;
    states.swap(next);
    discount *= gamma;
  }
  return value;
}

double rollout_value(RolloutModel& model, const FactoredState& start, std::span<const FactoredAction> actions,
                     const Goal& goal, double gamma, const ActionCost& cost) {
  ActionSequences seqs;
  for (const auto& a : actions) {
    if (static_cast<int>(a.width()) != model.spaces().action.width()) {
      throw ModelInputError("rollout_value: action width mismatch");
    }
    seqs.steps.emplace_back(Eigen::Map<const Eigen::VectorXd>(a.values.data(), a.values.size()));
  }
  if (seqs.steps.empty()) return 0.0;
  return evaluate_sequences(model, start, goal, seqs, gamma, cost)(0);
}

int select_best(const Eigen::VectorXd& values) {
  if (values.size() == 0) throw ConfigError("select_best: no candidates");
  int best = 0;
  for (int k = 1; k < values.size(); ++k)
    if (values(k) > values(best)) best = k;
  return best;
}

PlanResult plan(RolloutModel& model, const FactoredState& state, const Goal& goal, const PlannerConfig& config,
                std::uint64_t seed, const ActionCost& cost) {
  config.validate();
  Rng rng(seed);
  const ActionSequences seqs = sample_sequences(model.spaces().action, config.population, config.horizon, rng);
  const Eigen::VectorXd values = evaluate_sequences(model, state, goal, seqs, config.gamma, cost);
  PlanResult r;
  r.best_index = select_best(values);
  r.best_value = values(r.best_index);
  r.mean_value = values.mean();
  r.action = seqs.action(0, r.best_index);
  return r;
}

PlanResult act(RolloutModel& model, const FactoredState& state, const Goal& goal, const PlannerConfig& config,
               std::uint64_t seed, const ActionCost& cost) {
  config.validate();
  Rng rng(derive_seed(seed, 0x6163ULL));
  if (config.epsilon_greedy > 0.0 && bernoulli(rng, config.epsilon_greedy)) {
    PlanResult r;
    r.action = random_action(model.spaces().action, rng);
    r.planned = false;
    return r;
  }
  return plan(model, state, goal, config, derive_seed(seed, 0x706cULL), cost);
}

ActionCost environment_cost(const Environment& env, const PlannerConfig& config) {
  if (!config.use_action_cost) return {};
  return [&env](std::span<const double> a) { return env.action_cost(a); };
}

}  // namespace grader
