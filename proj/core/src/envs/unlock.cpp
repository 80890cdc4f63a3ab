#include "grader/envs/unlock.hpp"

#include <cstdlib>

namespace grader {

UnlockEnv::UnlockEnv(EnvConfig config) : Environment(config) {
  spaces_.state = FactorLayout({FactorSpace::discrete("agent", kCells), FactorSpace::discrete("key", kCells + 1, 1, true),
                                FactorSpace::discrete("doorA", kDoorOpen + 1, 1, true),
                                FactorSpace::discrete("doorB", kDoorOpen + 1, 1, true)});
  spaces_.action = FactorLayout(
      {FactorSpace::discrete("a_move", 4), FactorSpace::discrete("a_pick", 2), FactorSpace::discrete("a_open", 2)});
}

ResetResult UnlockEnv::sample_start(Rng& rng) const {
  const bool two_doors = config_.setting == Setting::composition && config_.phase == Phase::test;
  const bool spurious = config_.setting == Setting::spuriousness && config_.phase == Phase::train;

  std::vector<double> s(4, 0.0);
  Goal g;
  // The key sits near the wall of `near` (one of the present doors).
  int near = door_a;
  int near_row = 1;
  if (two_doors) {
    const int ra = uniform_int(rng, 1, kSize - 2);
    const int rb = uniform_int(rng, 1, kSize - 2);
    s[door_a] = ra;
    s[door_b] = rb;
    g.terms.push_back(GoalTerm{door_a, {double(kDoorOpen)}, 0.0});
    g.terms.push_back(GoalTerm{door_b, {double(kDoorOpen)}, 0.0});
    near = bernoulli(rng, 0.5) ? door_a : door_b;
    near_row = near == door_a ? ra : rb;
  } else {
    near = bernoulli(rng, 0.5) ? door_a : door_b;
    near_row = uniform_int(rng, 1, kSize - 2);
    s[near] = near_row;
    g.terms.push_back(GoalTerm{near, {double(kDoorOpen)}, 0.0});
  }

  const int key_row = spurious ? near_row : uniform_int(rng, 1, kSize - 2);
  const int offset = uniform_int(rng, 0, kKeyReach);
  const int key_col = near == door_a ? kSize - 1 - offset : offset;
  int ar = 0, ac = 0;
  do {
    ar = uniform_int(rng, 0, kSize - 1);
    ac = uniform_int(rng, 0, kSize - 1);
  } while (std::abs(ar - key_row) + std::abs(ac - key_col) > kAgentReach);
  s[agent] = cell(ar, ac);
  s[key] = cell(key_row, key_col) + 1;
  return {FactoredState(std::move(s)), std::move(g)};
}

FactoredState UnlockEnv::transition(const FactoredState& s, const FactoredAction& a) const {
  FactoredState next = s;
  const int pos = static_cast<int>(s.values[agent]);
  const int row = pos / kSize;
  const int col = pos % kSize;
  const int k = static_cast<int>(s.values[key]);
  const int move = static_cast<int>(a.values[0]);
  const bool pick = a.values[1] > 0.5;
  const bool open = a.values[2] > 0.5;

  if (pick && k != 0 && k - 1 == pos) next.values[key] = 0;
  for (int d : {door_a, door_b}) {
    const int status = static_cast<int>(s.values[d]);
    if (open && k == 0 && status >= 1 && status < kDoorOpen && row == status && col == door_column(d)) {
      next.values[d] = kDoorOpen;
    }
  }
  static constexpr int dr[4] = {-1, 1, 0, 0};
  static constexpr int dc[4] = {0, 0, -1, 1};
  const int nr = std::clamp(row + dr[move], 0, kSize - 1);
  const int nc = std::clamp(col + dc[move], 0, kSize - 1);
  next.values[agent] = cell(nr, nc);
  return next;
}

}  // namespace grader
