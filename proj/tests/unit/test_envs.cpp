#include <doctest.h>

#include <map>

#include "grader/envs/crash.hpp"
#include "grader/envs/stack.hpp"
#include "grader/envs/unlock.hpp"
#include "grader/error.hpp"

using namespace grader;

namespace {

EnvConfig config(EnvKind e, Setting s = Setting::in_distribution, Phase p = Phase::train) {
  EnvConfig c;
  c.env = e;
  c.setting = s;
  c.phase = p;
  return c;
}

FactoredAction stack_action(int shape, int color, int stack) { return FactoredAction({double(shape), double(color), double(stack)}); }

}  // namespace

TEST_CASE("factor counts and default horizons") {
  const StackEnv stack(config(EnvKind::stack));
  CHECK(stack.spaces().num_state_factors() == 2);
  CHECK(stack.spaces().num_action_factors() == 3);
  CHECK(stack.max_steps() == 5);
  const UnlockEnv unlock(config(EnvKind::unlock));
  CHECK(unlock.spaces().num_state_factors() == 4);
  CHECK(unlock.spaces().num_action_factors() == 3);
  CHECK(unlock.max_steps() == 15);
  const CrashEnv crash(config(EnvKind::crash));
  CHECK(crash.spaces().num_state_factors() == 7);
  CHECK(crash.spaces().num_action_factors() == 4);
  CHECK(crash.spaces().state.width() == 22);
  CHECK(crash.max_steps() == 30);
  for (EnvKind e : {EnvKind::stack, EnvKind::unlock, EnvKind::crash}) {
    const auto env = make_environment(config(e));
    const auto ref = reference_graph(e);
    CHECK(ref.num_state() == env->spaces().num_state_factors());
    CHECK(ref.num_action() == env->spaces().num_action_factors());
    CHECK(factor_space_header(*env).at("spaces").at("state_factors").size() == static_cast<std::size_t>(env->spaces().num_state_factors()));
  }
}

TEST_CASE("name parsing accepts short and long forms") {
  CHECK(parse_env("unlock") == EnvKind::unlock);
  CHECK(parse_setting("s") == Setting::spuriousness);
  CHECK(parse_setting("composition") == Setting::composition);
  CHECK(parse_phase("test") == Phase::test);
  CHECK_THROWS_AS(parse_env("maze"), ConfigError);
  CHECK_THROWS_AS(parse_setting("x"), ConfigError);
}

TEST_CASE("stack fills the lowest empty slot and stop is a no-op") {
  StackEnv env(config(EnvKind::stack));
  auto r = env.reset(1);
  CHECK(r.state.values == std::vector<double>(10, 0.0));
  FactoredState s = env.transition(r.state, stack_action(2, 4, 1));
  CHECK(s.values[0] == 3);
  CHECK(s.values[5] == 5);
  s = env.transition(s, stack_action(0, 0, 1));
  CHECK(s.values[1] == 1);
  CHECK(s.values[6] == 1);
  CHECK(env.transition(s, stack_action(4, 4, 0)) == s);
  CHECK(env.action_cost(stack_action(0, 0, 1).values) > 0.0);
  CHECK(env.action_cost(stack_action(0, 0, 0).values) == 0.0);
}

TEST_CASE("stack episode reaches the goal by stacking its objects") {
  StackEnv env(config(EnvKind::stack));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = env.reset(seed);
    const auto& shapes = r.goal.terms[0].value;
    const auto& colors = r.goal.terms[1].value;
    StepResult st;
    for (int slot = 0; slot < 5 && shapes[slot] != 0; ++slot) {
      st = env.step(stack_action(int(shapes[slot]) - 1, int(colors[slot]) - 1, 1));
    }
    CHECK(st.reward == 1.0);
    CHECK(st.terminal);
  }
}

TEST_CASE("stack goal distributions per setting") {
  Rng rng(2);
  const StackEnv spurious(config(EnvKind::stack, Setting::spuriousness));
  const StackEnv spurious_test(config(EnvKind::stack, Setting::spuriousness, Phase::test));
  const StackEnv comp_train(config(EnvKind::stack, Setting::composition));
  const StackEnv comp_test(config(EnvKind::stack, Setting::composition, Phase::test));
  int mismatched = 0, longest_train = 0, longest_test = 0;
  for (int k = 0; k < 500; ++k) {
    const Goal g = spurious.sample_goal(rng);
    for (int s = 0; s < 5; ++s) REQUIRE(g.terms[0].value[s] == g.terms[1].value[s]);
    const Goal t = spurious_test.sample_goal(rng);
    mismatched += t.terms[0].value[0] != t.terms[1].value[0];
    auto count = [](const Goal& goal) {
      int n = 0;
      for (double v : goal.terms[0].value) n += v != 0.0;
      return n;
    };
    longest_train = std::max(longest_train, count(comp_train.sample_goal(rng)));
    longest_test = std::max(longest_test, count(comp_test.sample_goal(rng)));
  }
  CHECK(mismatched > 300);
  CHECK(longest_train == 2);
  CHECK(longest_test == 5);
}

TEST_CASE("unlock: picking, opening and wall clipping") {
  UnlockEnv env(config(EnvKind::unlock));
  // Agent at (3, 6) on the key, door A closed at row 3.
  FactoredState s({double(UnlockEnv::cell(3, 6)), double(UnlockEnv::cell(3, 6) + 1), 3, 0});
  auto open = FactoredAction({3, 0, 1});
  CHECK(env.transition(s, open).values[2] == 3);  // key not held yet
  s = env.transition(s, FactoredAction({3, 1, 0}));
  CHECK(s.values[1] == 0);
  CHECK(s.values[0] == UnlockEnv::cell(3, 6));  // clipped at the right wall
  s = env.transition(s, open);
  CHECK(s.values[2] == UnlockEnv::kDoorOpen);
  FactoredState wrong_row({double(UnlockEnv::cell(2, 6)), 0, 3, 0});
  CHECK(env.transition(wrong_row, open).values[2] == 3);
  FactoredState corner({0, 5, 3, 0});
  CHECK(env.transition(corner, FactoredAction({0, 0, 0})).values[0] == 0);
  CHECK(env.transition(corner, FactoredAction({1, 0, 0})).values[0] == UnlockEnv::cell(1, 0));
}

TEST_CASE("unlock start distributions per setting") {
  Rng rng(3);
  const UnlockEnv train(config(EnvKind::unlock, Setting::spuriousness));
  const UnlockEnv test(config(EnvKind::unlock, Setting::spuriousness, Phase::test));
  const UnlockEnv two(config(EnvKind::unlock, Setting::composition, Phase::test));
  int off_row = 0;
  for (int k = 0; k < 500; ++k) {
    const auto r = train.sample_start(rng);
    const int key_row = (int(r.state.values[1]) - 1) / UnlockEnv::kSize;
    const int door = r.state.values[2] != 0 ? 2 : 3;
    REQUIRE(r.state.values[door] == key_row);
    REQUIRE(r.goal.terms.size() == 1);
    const auto t = test.sample_start(rng);
    const int tdoor = t.state.values[2] != 0 ? 2 : 3;
    off_row += t.state.values[tdoor] != (int(t.state.values[1]) - 1) / UnlockEnv::kSize;
    const auto c = two.sample_start(rng);
    REQUIRE(c.goal.terms.size() == 2);
    REQUIRE(c.state.values[2] >= 1);
    REQUIRE(c.state.values[3] >= 1);
  }
  CHECK(off_row > 250);
}

TEST_CASE("crash: ego stops for a visible pedestrian with room to brake") {
  CrashEnv env(config(EnvKind::crash));
  FactoredState s = env.reset(4).state;
  s.values[0] = 6.0;
  s.values[1] = 0.0;
  const FactoredAction still(std::vector<double>(8, 0.0));
  for (int t = 0; t < 10; ++t) s = env.transition(s, still);
  CHECK(s.values[20] == 0.0);
  CHECK(s.values[6] == 0.0);  // ego speed
}

TEST_CASE("crash: pedestrian too close to brake for is hit and the flag sticks") {
  CrashEnv env(config(EnvKind::crash));
  auto r = env.reset(4);
  FactoredState s = r.state;
  // Pedestrian standing in the ego lane 3 m ahead.
  s.values[0] = 3.0;
  s.values[1] = 0.0;
  s.values[2] = s.values[3] = 0.0;
  CHECK(env.ego_brakes(s));
  const FactoredAction still(std::vector<double>(8, 0.0));
  bool hit = false;
  for (int t = 0; t < 5 && !hit; ++t) {
    s = env.transition(s, still);
    hit = s.values[20] == 1.0;
  }
  CHECK(hit);
  s.values[0] = 30.0;
  CHECK(env.transition(s, still).values[20] == 1.0);
}

TEST_CASE("crash: car1 blocks line of sight") {
  const std::array<double, 4> ego{0, 0, 5, 0};
  const std::array<double, 4> car1{5, 0, 0, 0};
  CHECK_FALSE(CrashEnv::visible(ego, car1, 9.0, 0.0));
  CHECK(CrashEnv::visible(ego, car1, 0.0, 8.0));
}

TEST_CASE("crash composition test puts a pedestrian in the car3 slot") {
  const CrashEnv train(config(EnvKind::crash, Setting::composition));
  const CrashEnv test(config(EnvKind::crash, Setting::composition, Phase::test));
  CHECK_FALSE(train.car3_is_pedestrian());
  CHECK(test.car3_is_pedestrian());
  Rng rng(5);
  CHECK(train.sample_goal(rng).terms.size() == 1);
  CHECK(test.sample_goal(rng).terms.size() == 2);
  const CrashEnv spurious(config(EnvKind::crash, Setting::spuriousness));
  for (int k = 0; k < 20; ++k) CHECK(spurious.sample_start(rng).state.values[0] == CrashEnv::kSpuriousPedX);
}

TEST_CASE("episodes are deterministic in the seed and stay in bounds") {
  for (EnvKind e : {EnvKind::stack, EnvKind::unlock, EnvKind::crash}) {
    auto a = make_environment(config(e));
    auto b = make_environment(config(e));
    Rng ra(7), rb(7);
    auto sa = a->reset(11), sb = b->reset(11);
    CHECK(sa.state == sb.state);
    CHECK(sa.goal == sb.goal);
    for (int t = 0; t < a->max_steps(); ++t) {
      const auto act_a = random_action(a->spaces().action, ra);
      const auto act_b = random_action(b->spaces().action, rb);
      const auto x = a->step(act_a);
      const auto y = b->step(act_b);
      REQUIRE(x.next_state == y.next_state);
      REQUIRE(a->spaces().state.contains(x.next_state.values));
      REQUIRE((x.reward == 0.0 || x.reward == 1.0));
      if (x.terminal) break;
    }
  }
}

TEST_CASE("step validates actions and refuses to run past the end") {
  StackEnv env(config(EnvKind::stack));
  env.reset(0);
  CHECK_THROWS_AS(env.step(FactoredAction({0, 0})), DomainError);
  CHECK_THROWS_AS(env.step(FactoredAction({7, 0, 1})), DomainError);
  for (int t = 0; t < 5; ++t) env.step(stack_action(0, 0, 0));
  CHECK_THROWS_AS(env.step(stack_action(0, 0, 0)), Error);
}
