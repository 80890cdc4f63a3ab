#include "grader/envs/stack.hpp"

namespace grader {

StackEnv::StackEnv(EnvConfig config) : Environment(config) {
  spaces_.state = FactorLayout({FactorSpace::discrete("shapes", kShapes + 1, kSlots, true),
                                FactorSpace::discrete("colors", kColors + 1, kSlots, true)});
  spaces_.action = FactorLayout({FactorSpace::discrete("a_shape", kShapes), FactorSpace::discrete("a_color", kColors),
                                 FactorSpace::discrete("a_stack", 2)});
}

int StackEnv::max_goal_objects() const {
  return config_.setting == Setting::composition && config_.phase == Phase::test ? kSlots : 2;
}

ResetResult StackEnv::sample_start(Rng& rng) const {
  const int k = uniform_int(rng, 1, max_goal_objects());
  const bool spurious = config_.setting == Setting::spuriousness && config_.phase == Phase::train;
  std::vector<double> shapes(kSlots, 0.0), colors(kSlots, 0.0);
  for (int s = 0; s < k; ++s) {
    const int shape = uniform_int(rng, 1, kShapes);
    shapes[s] = shape;
    colors[s] = spurious ? shape : uniform_int(rng, 1, kColors);
  }
  Goal g;
  g.terms.push_back(GoalTerm{0, shapes, 0.0});
  g.terms.push_back(GoalTerm{1, colors, 0.0});
  return {FactoredState(std::vector<double>(2 * kSlots, 0.0)), std::move(g)};
}

FactoredState StackEnv::transition(const FactoredState& s, const FactoredAction& a) const {
  FactoredState next = s;
  if (a.values[2] < 0.5) return next;
  for (int slot = 0; slot < kSlots; ++slot) {
    if (next.values[slot] == 0.0) {
      next.values[slot] = a.values[0] + 1.0;
      next.values[kSlots + slot] = a.values[1] + 1.0;
      break;
    }
  }
  return next;
}

double StackEnv::action_cost(std::span<const double> action) const {
  return action[2] > 0.5 ? kStackPenalty : 0.0;
}

double StackEnv::penalty(const FactoredState& s, const FactoredAction& a) const {
  return a.values[2] > 0.5 && s.values[kSlots - 1] == 0.0 ? kStackPenalty : 0.0;
}

}  // namespace grader
