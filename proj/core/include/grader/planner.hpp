#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "grader/dynamics.hpp"
#include "grader/envs/environment.hpp"

namespace grader {

struct PlannerConfig {
  int horizon = 5;
  int population = 500;
  double gamma = 0.99;
  double epsilon_greedy = 0.4;
  // Subtract the environment's per-step action cost in rollouts.
  bool use_action_cost = true;

  void validate() const;
};

// Horizon, population and exploration rate per environment.
PlannerConfig default_planner_config(EnvKind env);
void to_json(nlohmann::json& j, const PlannerConfig& c);
void from_json(const nlohmann::json& j, PlannerConfig& c);

// Batched one-step model used by rollouts: maps raw state columns and action
// columns to raw next-state columns.
class RolloutModel {
 public:
  virtual ~RolloutModel() = default;
  virtual const MdpSpaces& spaces() const = 0;
  // Called once per planning call before any step.
  virtual void prepare(const Goal& /*goal*/) {}
  virtual void step(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions, Eigen::MatrixXd& next) = 0;
};

// Learned model in deterministic mode; only targets the goal depends on are
// computed.
class LearnedRolloutModel : public RolloutModel {
 public:
  explicit LearnedRolloutModel(const FactoredDynamicsModel& model) : model_(model) {}
  const MdpSpaces& spaces() const override { return model_.spaces(); }
  void prepare(const Goal& goal) override { targets_ = relevant_targets(model_.graph(), goal); }
  void step(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions, Eigen::MatrixXd& next) override;

 private:
  const FactoredDynamicsModel& model_;
  std::vector<bool> targets_;
};

// The environment's own transition function.
class PerfectRolloutModel : public RolloutModel {
 public:
  explicit PerfectRolloutModel(const Environment& env) : env_(env) {}
  const MdpSpaces& spaces() const override { return env_.spaces(); }
  void step(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions, Eigen::MatrixXd& next) override;

 private:
  const Environment& env_;
};

using ActionCost = std::function<double(std::span<const double>)>;

// H action matrices (action width x K); column k of step t is action t of
// sequence k.
struct ActionSequences {
  std::vector<Eigen::MatrixXd> steps;
  int population() const { return steps.empty() ? 0 : static_cast<int>(steps.front().cols()); }
  int horizon() const { return static_cast<int>(steps.size()); }
  FactoredAction action(int t, int k) const;
};

// Discrete factors uniform over categories, continuous uniform over the box.
ActionSequences sample_sequences(const FactorLayout& actions, int population, int horizon, Rng& rng);

// sum_t gamma^t * (reward(s_{t+1}, goal) - cost(a_t)); accumulation stops
// after the first predicted state that satisfies the goal.
Eigen::VectorXd evaluate_sequences(RolloutModel& model, const FactoredState& start, const Goal& goal,
                                   const ActionSequences& seqs, double gamma, const ActionCost& cost = {});

double rollout_value(RolloutModel& model, const FactoredState& start, std::span<const FactoredAction> actions,
                     const Goal& goal, double gamma, const ActionCost& cost = {});

// Index of the largest value; ties go to the lowest index.
int select_best(const Eigen::VectorXd& values);

struct PlanResult {
  FactoredAction action;
  int best_index = 0;
  double best_value = 0.0;
  double mean_value = 0.0;
  bool planned = true;
};

PlanResult plan(RolloutModel& model, const FactoredState& state, const Goal& goal, const PlannerConfig& config,
                std::uint64_t seed, const ActionCost& cost = {});

// With probability epsilon_greedy a uniform-random action (planned == false),
// otherwise plan's output.
PlanResult act(RolloutModel& model, const FactoredState& state, const Goal& goal, const PlannerConfig& config,
               std::uint64_t seed, const ActionCost& cost = {});

// Cost callback for an environment when config.use_action_cost is set.
ActionCost environment_cost(const Environment& env, const PlannerConfig& config);

}  // namespace grader
