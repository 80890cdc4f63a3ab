#pragma once

#include <array>

#include "grader/envs/environment.hpp"

namespace grader {

// Road scene with a rule-based ego vehicle.
//
// State factors: ped, ego, car1, car2, car3 as (x, y, vx, vy) in meters and
// m/s, plus two 0/1 collision flags, flag0 (ego hit the pedestrian) and
// flag1 (ego hit the entity in the car3 slot). Action factors: normalized
// (accel, steer) in [-1, 1] for ped, car1, car2 and car3; ego is not
// controlled.
//
// Ego drives along y = 0 and brakes when it sees a pedestrian in its lane
// within kSenseRange ahead (line of sight not blocked by car1's box) or any
// vehicle in its lane; otherwise it returns to cruise speed. A flag sets when the ego
// box overlaps the entity while the ego moves faster than kCrashSpeed; flags
// are sticky. car2 and car3 are confined to the far lane. In the composition
// test phase the car3 slot holds a second pedestrian and the goal needs both
// flags.
class CrashEnv : public Environment {
 public:
  enum Factor { ped = 0, ego = 1, car1 = 2, car2 = 3, car3 = 4, flag0 = 5, flag1 = 6 };

  static constexpr double kDt = 0.2;
  static constexpr double kCruise = 5.0;
  static constexpr double kBrake = 8.0;
  static constexpr double kEgoAccel = 2.0;
  static constexpr double kSenseRange = 10.0;
  static constexpr double kLaneHalfWidth = 2.0;
  static constexpr double kCrashSpeed = 1.0;
  static constexpr double kCarHalfLength = 2.25;
  static constexpr double kCarHalfWidth = 1.0;
  static constexpr double kPedRadius = 0.5;
  static constexpr double kPedAccel = 4.0;
  static constexpr double kPedMaxSpeed = 3.0;
  static constexpr double kCarAccel = 3.0;
  static constexpr double kCarMaxSpeed = 8.0;
  static constexpr double kCarMaxLateral = 2.0;
  static constexpr double kFarLaneLo = -8.0;
  static constexpr double kFarLaneHi = -5.0;
  // Initial ego-pedestrian offset used by the spurious training distribution.
  static constexpr double kSpuriousPedX = 18.0;
  static constexpr double kPedStartY = 5.0;
  static constexpr double kCar1Y = 3.0;

  explicit CrashEnv(EnvConfig config);

  ResetResult sample_start(Rng& rng) const override;
  FactoredState transition(const FactoredState& s, const FactoredAction& a) const override;

  bool car3_is_pedestrian() const { return car3_pedestrian_; }
  // Line of sight from the ego center to a point, blocked by car1's box.
  static bool visible(const std::array<double, 4>& ego, const std::array<double, 4>& car1, double x, double y);
  bool ego_brakes(const FactoredState& s) const;

 private:
  bool car3_pedestrian_ = false;
};

}  // namespace grader
