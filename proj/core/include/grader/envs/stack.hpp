#pragma once

#include "grader/envs/environment.hpp"

namespace grader {

// Tower building with 5 shapes and 5 colors in 5 slots.
//
// State factors: "shapes" and "colors", each 5 slots with value 0 (empty) or
// 1..5. Action factors: "a_shape" and "a_color" (0..4) and "a_stack" (0 stop,
// 1 stack). Stacking fills the lowest empty slot; stopping leaves the tower
// unchanged. Goals assign the whole tower (k objects, rest empty).
class StackEnv : public Environment {
 public:
  static constexpr int kSlots = 5;
  static constexpr int kShapes = 5;
  static constexpr int kColors = 5;
  static constexpr double kStackPenalty = 0.05;

  explicit StackEnv(EnvConfig config);

  ResetResult sample_start(Rng& rng) const override;
  FactoredState transition(const FactoredState& s, const FactoredAction& a) const override;
  double action_cost(std::span<const double> action) const override;
  // Slot count of goals: train {1, 2}; composition test {1, ..., 5}.
  int max_goal_objects() const;

 protected:
  double penalty(const FactoredState& s, const FactoredAction& a) const override;
};

}  // namespace grader
