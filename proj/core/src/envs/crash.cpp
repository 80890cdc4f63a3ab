#include "grader/envs/crash.hpp"

#include <algorithm>
#include <cmath>

namespace grader {

namespace {

constexpr double kXLo = -10.0, kXHi = 70.0, kYLo = -10.0, kYHi = 10.0, kVMax = 8.0;

using Entity = std::array<double, 4>;

Entity entity(const FactoredState& s, int f) {
  const auto* p = s.values.data() + 4 * f;
  return {p[0], p[1], p[2], p[3]};
}

void put(FactoredState& s, int f, const Entity& e) { std::copy(e.begin(), e.end(), s.values.begin() + 4 * f); }

// Liang-Barsky clip of the segment (x0, y0) -> (x1, y1) against a box.
bool segment_hits_box(double x0, double y0, double x1, double y1, double bx0, double by0, double bx1, double by1) {
  double t0 = 0.0, t1 = 1.0;
  const double dx = x1 - x0, dy = y1 - y0;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {x0 - bx0, bx1 - x0, y0 - by0, by1 - y0};
  for (int k = 0; k < 4; ++k) {
    if (p[k] == 0.0) {
      if (q[k] < 0.0) return false;
      continue;
    }
    const double t = q[k] / p[k];
    if (p[k] < 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
    if (t0 > t1) return false;
  }
  return true;
}

Entity move_pedestrian(const Entity& e, double accel, double steer) {
  Entity n;
  n[2] = std::clamp(e[2] + CrashEnv::kPedAccel * accel * CrashEnv::kDt, -CrashEnv::kPedMaxSpeed, CrashEnv::kPedMaxSpeed);
  n[3] = std::clamp(e[3] + CrashEnv::kPedAccel * steer * CrashEnv::kDt, -CrashEnv::kPedMaxSpeed, CrashEnv::kPedMaxSpeed);
  n[0] = std::clamp(e[0] + n[2] * CrashEnv::kDt, kXLo, kXHi);
  n[1] = std::clamp(e[1] + n[3] * CrashEnv::kDt, kYLo, kYHi);
  return n;
}

Entity move_car(const Entity& e, double accel, double steer, double ylo, double yhi) {
  Entity n;
  n[2] = std::clamp(e[2] + CrashEnv::kCarAccel * accel * CrashEnv::kDt, -2.0, CrashEnv::kCarMaxSpeed);
  n[3] = CrashEnv::kCarMaxLateral * steer;
  n[0] = std::clamp(e[0] + n[2] * CrashEnv::kDt, kXLo, kXHi);
  n[1] = std::clamp(e[1] + n[3] * CrashEnv::kDt, ylo, yhi);
  return n;
}

bool overlaps_pedestrian(const Entity& ego, const Entity& p) {
  return std::abs(p[0] - ego[0]) < CrashEnv::kCarHalfLength + CrashEnv::kPedRadius &&
         std::abs(p[1] - ego[1]) < CrashEnv::kCarHalfWidth + CrashEnv::kPedRadius;
}

bool overlaps_car(const Entity& ego, const Entity& c) {
  return std::abs(c[0] - ego[0]) < 2.0 * CrashEnv::kCarHalfLength &&
         std::abs(c[1] - ego[1]) < 2.0 * CrashEnv::kCarHalfWidth;
}

}  // namespace

CrashEnv::CrashEnv(EnvConfig config) : Environment(config) {
  car3_pedestrian_ = config_.setting == Setting::composition && config_.phase == Phase::test;
  const std::vector<double> lo{kXLo, kYLo, -kVMax, -kVMax};
  const std::vector<double> hi{kXHi, kYHi, kVMax, kVMax};
  spaces_.state = FactorLayout({FactorSpace::continuous("ped", lo, hi), FactorSpace::continuous("ego", lo, hi),
                                FactorSpace::continuous("car1", lo, hi), FactorSpace::continuous("car2", lo, hi),
                                FactorSpace::continuous("car3", lo, hi), FactorSpace::discrete("flag0", 2, 1, true),
                                FactorSpace::discrete("flag1", 2, 1, true)});
  const std::vector<double> alo{-1.0, -1.0}, ahi{1.0, 1.0};
  spaces_.action = FactorLayout({FactorSpace::continuous("a_ped", alo, ahi), FactorSpace::continuous("a_car1", alo, ahi),
                                 FactorSpace::continuous("a_car2", alo, ahi),
                                 FactorSpace::continuous("a_car3", alo, ahi)});
}

ResetResult CrashEnv::sample_start(Rng& rng) const {
  const bool spurious = config_.setting == Setting::spuriousness && config_.phase == Phase::train;
  FactoredState s(std::vector<double>(22, 0.0));
  const double ped_x = spurious ? kSpuriousPedX : uniform_real(rng, 14.0, 26.0);
  put(s, ped, {ped_x, kPedStartY, 0.0, 0.0});
  put(s, ego, {0.0, 0.0, kCruise, 0.0});
  put(s, car1, {uniform_real(rng, 10.0, 16.0), kCar1Y, 0.0, 0.0});
  put(s, car2, {uniform_real(rng, 0.0, 40.0), uniform_real(rng, kFarLaneLo, kFarLaneHi), uniform_real(rng, 0.0, 4.0), 0.0});
  if (car3_pedestrian_) {
    put(s, car3, {ped_x + uniform_real(rng, 4.0, 8.0), kPedStartY, 0.0, 0.0});
  } else {
    put(s, car3,
        {uniform_real(rng, 0.0, 40.0), uniform_real(rng, kFarLaneLo, kFarLaneHi), uniform_real(rng, 0.0, 4.0), 0.0});
  }
  Goal g;
  g.terms.push_back(GoalTerm{flag0, {1.0}, 0.0});
  if (car3_pedestrian_) g.terms.push_back(GoalTerm{flag1, {1.0}, 0.0});
  return {std::move(s), std::move(g)};
}

bool CrashEnv::visible(const Entity& e, const Entity& c1, double x, double y) {
  return !segment_hits_box(e[0], e[1], x, y, c1[0] - kCarHalfLength, c1[1] - kCarHalfWidth, c1[0] + kCarHalfLength,
                           c1[1] + kCarHalfWidth);
}

bool CrashEnv::ego_brakes(const FactoredState& s) const {
  const Entity e = entity(s, ego);
  const Entity c1 = entity(s, car1);
  auto pedestrian_hazard = [&](const Entity& p) {
    const double dx = p[0] - e[0], dy = p[1] - e[1];
    return dx > -kCarHalfLength && dx <= kSenseRange && std::abs(dy) < kCarHalfWidth && visible(e, c1, p[0], p[1]);
  };
  auto vehicle_hazard = [&](const Entity& c) {
    const double dx = c[0] - e[0];
    return dx > 0.0 && dx <= kSenseRange && std::abs(c[1] - e[1]) < kLaneHalfWidth;
  };
  if (pedestrian_hazard(entity(s, ped))) return true;
  if (vehicle_hazard(c1) || vehicle_hazard(entity(s, car2))) return true;
  return car3_pedestrian_ ? pedestrian_hazard(entity(s, car3)) : vehicle_hazard(entity(s, car3));
}

FactoredState CrashEnv::transition(const FactoredState& s, const FactoredAction& a) const {
  FactoredState n = s;
  const auto& u = a.values;
  const Entity e = entity(s, ego);

  put(n, ped, move_pedestrian(entity(s, ped), u[0], u[1]));
  put(n, car1, move_car(entity(s, car1), u[2], u[3], kYLo, kYHi));
  put(n, car2, move_car(entity(s, car2), u[4], u[5], kFarLaneLo, kFarLaneHi));
  if (car3_pedestrian_) {
    put(n, car3, move_pedestrian(entity(s, car3), u[6], u[7]));
  } else {
    put(n, car3, move_car(entity(s, car3), u[6], u[7], kFarLaneLo, kFarLaneHi));
  }

  Entity ne = e;
  ne[2] = ego_brakes(s) ? std::max(0.0, e[2] - kBrake * kDt) : std::min(kCruise, e[2] + kEgoAccel * kDt);
  ne[3] = 0.0;
  ne[0] = std::clamp(e[0] + ne[2] * kDt, kXLo, kXHi);
  put(n, ego, ne);

  const bool moving = e[2] > kCrashSpeed;
  if (moving && overlaps_pedestrian(e, entity(s, ped))) n.values[20] = 1.0;
  const Entity c3 = entity(s, car3);
  if (moving && (car3_pedestrian_ ? overlaps_pedestrian(e, c3) : overlaps_car(e, c3))) n.values[21] = 1.0;
  return n;
}

}  // namespace grader
