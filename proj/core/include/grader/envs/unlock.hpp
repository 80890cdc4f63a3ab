#pragma once

#include "grader/envs/environment.hpp"

namespace grader {

// 7x7 grid with a key and doors in the side walls.
//
// State factors:
//   agent  cell index r * 7 + c (49 values);
//   key    0 when held, otherwise 1 + cell index (spawns in rows 1..5);
//   doorA  right-wall door (column 6): 0 absent, r in 1..5 closed at row r,
//          6 open; doorB is the same for the left wall (column 0).
// Action factors: a_move (0 up, 1 down, 2 left, 3 right; clipped at walls),
// a_pick and a_open as 0/1 flags. Effects use the pre-move position: picking
// needs the agent on the key, opening needs the held key and the agent on the
// wall cell of the door's row. Goals require every present door to be open.
class UnlockEnv : public Environment {
 public:
  static constexpr int kSize = 7;
  static constexpr int kCells = kSize * kSize;
  static constexpr int kDoorOpen = 6;
  // Spawn geometry: the key lies within kKeyReach columns of a door wall and
  // the agent within Manhattan distance kAgentReach of the key.
  static constexpr int kKeyReach = 1;
  static constexpr int kAgentReach = 2;

  enum Factor { agent = 0, key = 1, door_a = 2, door_b = 3 };

  explicit UnlockEnv(EnvConfig config);

  ResetResult sample_start(Rng& rng) const override;
  FactoredState transition(const FactoredState& s, const FactoredAction& a) const override;

  static int cell(int row, int col) { return row * kSize + col; }
  static int door_column(int door_factor) { return door_factor == door_a ? kSize - 1 : 0; }
};

}  // namespace grader
