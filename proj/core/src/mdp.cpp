#include "grader/mdp.hpp"

#include <cmath>

#include "grader/error.hpp"

namespace grader {

void to_json(nlohmann::json& j, const MdpSpaces& s) {
  j = nlohmann::json{{"state_factors", s.state}, {"action_factors", s.action}};
}

void from_json(const nlohmann::json& j, MdpSpaces& s) {
  s.state = j.at("state_factors").get<FactorLayout>();
  s.action = j.at("action_factors").get<FactorLayout>();
}

bool Goal::assigns(int factor) const {
  for (const auto& t : terms) {
    if (t.factor == factor) return true;
  }
  return false;
}

void Goal::validate(const FactorLayout& layout) const {
  for (const auto& t : terms) {
    if (t.factor < 0 || t.factor >= layout.size()) {
      throw InvalidGoalError("goal term refers to state factor " + std::to_string(t.factor) +
                             " but the layout has " + std::to_string(layout.size()));
    }
    if (static_cast<int>(t.value.size()) != layout[t.factor].width()) {
      throw InvalidGoalError("goal term for '" + layout[t.factor].name + "' has wrong width");
    }
    if (!(t.tolerance >= 0.0)) throw InvalidGoalError("goal tolerance must be >= 0");
  }
}

void to_json(nlohmann::json& j, const Goal& g) {
  j = nlohmann::json::array();
  for (const auto& t : g.terms) {
    j.push_back({{"factor", t.factor}, {"value", t.value}, {"tolerance", t.tolerance}});
  }
}

void from_json(const nlohmann::json& j, Goal& g) {
  g.terms.clear();
  for (const auto& t : j) {
    g.terms.push_back({t.at("factor").get<int>(), t.at("value").get<std::vector<double>>(),
                       t.value("tolerance", 0.0)});
  }
}

bool goal_satisfied(const FactorLayout& layout, std::span<const double> s, const Goal& goal) {
  for (const auto& t : goal.terms) {
    const auto v = layout.view(s, t.factor);
    const bool discrete = layout[t.factor].is_discrete();
    for (std::size_t k = 0; k < t.value.size(); ++k) {
      if (discrete) {
        if (v[k] != t.value[k]) return false;
      } else if (std::abs(v[k] - t.value[k]) > t.tolerance) {
        return false;
      }
    }
  }
  return true;
}

double reward(const FactorLayout& layout, const FactoredState& next_state, const Goal& goal) {
  goal.validate(layout);
  if (static_cast<int>(next_state.width()) != layout.width()) {
    throw DimensionError("state width does not match the layout");
  }
  return goal_satisfied(layout, next_state.span(), goal) ? 1.0 : 0.0;
}

void validate_sample(const MdpSpaces& spaces, const TransitionSample& s) {
  spaces.state.validate(s.state.span());
  spaces.action.validate(s.action.span());
  spaces.state.validate(s.next_state.span());
  if (s.reward != 0.0 && s.reward != 1.0) throw DomainError("reward must be 0 or 1");
  if (reward(spaces.state, s.next_state, s.goal) != s.reward) {
    throw DomainError("sample reward disagrees with its goal");
  }
}

bool Trajectory::is_consistent(int max_steps) const {
  if (static_cast<int>(samples.size()) > max_steps) return false;
  for (std::size_t k = 1; k < samples.size(); ++k) {
    if (!(samples[k - 1].next_state == samples[k].state)) return false;
  }
  return true;
}

double Trajectory::total_reward() const {
  double r = 0.0;
  for (const auto& s : samples) r += s.reward;
  return r;
}

}  // namespace grader
