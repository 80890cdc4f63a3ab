#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "grader/factor.hpp"

namespace grader {

// State and action factor layouts of a factored MDP.
struct MdpSpaces {
  FactorLayout state;
  FactorLayout action;

  int num_state_factors() const { return state.size(); }
  int num_action_factors() const { return action.size(); }
  int num_sources() const { return state.size() + action.size(); }
  // Source index i < M refers to state factor i, otherwise action factor i - M.
  const FactorSpace& source(int i) const {
    return i < state.size() ? state[i] : action[i - state.size()];
  }

  friend bool operator==(const MdpSpaces&, const MdpSpaces&) = default;
};

void to_json(nlohmann::json& j, const MdpSpaces& s);
void from_json(const nlohmann::json& j, MdpSpaces& s);

// One required factor value. Discrete factors match exactly; continuous
// factors match when every element is within `tolerance`.
struct GoalTerm {
  int factor = 0;
  std::vector<double> value;
  double tolerance = 0.0;

  friend bool operator==(const GoalTerm&, const GoalTerm&) = default;
};

// Partial assignment over state factors.
struct Goal {
  std::vector<GoalTerm> terms;

  bool assigns(int factor) const;
  // Throws InvalidGoalError when a term does not fit the layout.
  void validate(const FactorLayout& state_layout) const;

  friend bool operator==(const Goal&, const Goal&) = default;
};

void to_json(nlohmann::json& j, const Goal& g);
void from_json(const nlohmann::json& j, Goal& g);

// r(s, g) = 1 if every goal-assigned factor of next_state matches, else 0.
double reward(const FactorLayout& state_layout, const FactoredState& next_state, const Goal& goal);
bool goal_satisfied(const FactorLayout& state_layout, std::span<const double> next_state, const Goal& goal);

struct TransitionSample {
  FactoredState state;
  FactoredAction action;
  FactoredState next_state;
  Goal goal;
  double reward = 0.0;
  bool terminal = false;
  std::int64_t trajectory_id = 0;

  friend bool operator==(const TransitionSample&, const TransitionSample&) = default;
};

// Throws DomainError when the reward does not agree with the goal or values
// fall outside their spaces.
void validate_sample(const MdpSpaces& spaces, const TransitionSample& sample);

struct Trajectory {
  Goal goal;
  std::vector<TransitionSample> samples;

  // Consecutive samples chain and the length does not exceed max_steps.
  bool is_consistent(int max_steps) const;
  double total_reward() const;
};

}  // namespace grader
