#include <doctest.h>

#include <sstream>

#include "grader/error.hpp"
#include "grader/mdp.hpp"
#include "grader/replay_buffer.hpp"
#include "synthetic.hpp"

using namespace grader;
using grader::testing::discrete_spaces;
using grader::testing::plain_sample;

namespace {

FactorLayout mixed_state() {
  return FactorLayout({FactorSpace::discrete("d", 4), FactorSpace::continuous("c", {-1.0, -1.0}, {1.0, 1.0})});
}

}  // namespace

TEST_CASE("reward is 1 exactly when every assigned factor matches") {
  const FactorLayout layout = mixed_state();
  Goal g;
  g.terms.push_back({0, {2.0}, 0.0});
  g.terms.push_back({1, {0.5, -0.5}, 0.1});
  CHECK(reward(layout, FactoredState({2, 0.55, -0.45}), g) == 1.0);
  CHECK(reward(layout, FactoredState({2, 0.5, -0.5}), g) == 1.0);
  CHECK(reward(layout, FactoredState({1, 0.5, -0.5}), g) == 0.0);
  CHECK(reward(layout, FactoredState({2, 0.75, -0.5}), g) == 0.0);
}

TEST_CASE("fully specified goal equal to the state gives reward 1") {
  const FactorLayout layout = mixed_state();
  const FactoredState s({3, 0.1, 0.2});
  Goal g;
  g.terms.push_back({0, {3.0}, 0.0});
  g.terms.push_back({1, {0.1, 0.2}, 0.0});
  CHECK(reward(layout, s, g) == 1.0);
}

TEST_CASE("goals naming a missing factor are invalid") {
  const FactorLayout layout = mixed_state();
  Goal g;
  g.terms.push_back({5, {0.0}, 0.0});
  CHECK_THROWS_AS(reward(layout, FactoredState({0, 0, 0}), g), InvalidGoalError);
  Goal neg;
  neg.terms.push_back({1, {0.0, 0.0}, -1.0});
  CHECK_THROWS_AS(neg.validate(layout), InvalidGoalError);
}

TEST_CASE("reward ignores factors the goal does not assign") {
  const FactorLayout layout = mixed_state();
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    Goal g;
    g.terms.push_back({0, {double(uniform_int(rng, 0, 3))}, 0.0});
    FactoredState s({double(uniform_int(rng, 0, 3)), uniform_real(rng, -1, 1), uniform_real(rng, -1, 1)});
    const double r = reward(layout, s, g);
    s.values[1] = uniform_real(rng, -1, 1);
    s.values[2] = uniform_real(rng, -1, 1);
    REQUIRE(reward(layout, s, g) == r);
  }
}

TEST_CASE("buffer push evicts oldest first") {
  const MdpSpaces sp = discrete_spaces({3}, {2});
  ReplayBuffer buf(sp, 3);
  buf.push(plain_sample({0}, {0}, {1}, 0));
  CHECK(buf.size() == 1);
  buf.push(plain_sample({1}, {0}, {2}, 1));
  buf.push(plain_sample({2}, {1}, {0}, 2));
  buf.push(plain_sample({0}, {1}, {0}, 3));
  CHECK(buf.size() == 3);
  CHECK(buf[0].trajectory_id == 1);
  CHECK(buf[2].trajectory_id == 3);
}

TEST_CASE("buffer at Stack capacity holds 4000 samples") {
  const MdpSpaces sp = discrete_spaces({3}, {2});
  ReplayBuffer buf(sp, 4000);
  std::size_t last = 0;
  for (int k = 0; k < 4500; ++k) {
    buf.push(plain_sample({double(k % 3)}, {double(k % 2)}, {0}, k));
    CHECK(buf.size() >= last);
    last = buf.size();
  }
  CHECK(buf.size() == 4000);
}

TEST_CASE("buffer rejects samples outside the spaces or with an inconsistent reward") {
  const MdpSpaces sp = discrete_spaces({3}, {2});
  ReplayBuffer buf(sp, 3);
  CHECK_THROWS_AS(buf.push(plain_sample({3}, {0}, {0})), DomainError);
  TransitionSample bad = plain_sample({0}, {0}, {1});
  bad.goal.terms.push_back({0, {2.0}, 0.0});
  CHECK_THROWS_AS(buf.push(bad), DomainError);
}

TEST_CASE("sample_batch draws with replacement and is seeded") {
  const MdpSpaces sp = discrete_spaces({3}, {2});
  ReplayBuffer one(sp, 10);
  one.push(plain_sample({1}, {1}, {2}, 42));
  const auto b = one.sample_batch(5, 3);
  CHECK(b.size() == 5);
  for (const auto& s : b) CHECK(s.trajectory_id == 42);

  ReplayBuffer big(sp, 1000);
  for (int k = 0; k < 1000; ++k) big.push(plain_sample({double(k % 3)}, {double(k % 2)}, {0}, k));
  CHECK(big.sample_batch(256, 11).size() == 256);
  CHECK(big.sample_batch(256, 11) == big.sample_batch(256, 11));

  ReplayBuffer empty(sp, 4);
  CHECK_THROWS_AS(empty.sample_batch(1, 0), EmptyBufferError);
}

TEST_CASE("buffer CSV round-trips exactly") {
  const MdpSpaces sp{FactorLayout({FactorSpace::discrete("tower", 6, 5, true),
                                   FactorSpace::continuous("pos", {-10.0, -10.0}, {70.0, 10.0})}),
                     FactorLayout({FactorSpace::discrete("a", 2)})};
  ReplayBuffer buf(sp, 10);
  TransitionSample s{FactoredState({1, 2, 0, 0, 0, 0.1234567890123, -3.5}), FactoredAction({1}),
                     FactoredState({1, 2, 3, 0, 0, 1.0 / 3.0, -3.25}), Goal{}, 1.0, false, 9};
  s.goal.terms.push_back({1, {1.0 / 3.0, -3.25}, 0.01});
  buf.push(s);
  std::stringstream ss;
  write_buffer_csv(ss, buf);
  const ReplayBuffer back = read_buffer_csv(ss);
  REQUIRE(back.size() == 1);
  CHECK(back.spaces() == sp);
  CHECK(back[0] == s);
}

TEST_CASE("malformed buffer CSV names the line") {
  const MdpSpaces sp = discrete_spaces({3}, {2});
  ReplayBuffer buf(sp, 4);
  buf.push(plain_sample({0}, {1}, {2}));
  std::stringstream ss;
  write_buffer_csv(ss, buf);
  std::string text = ss.str();
  text += "garbage,row\n";
  std::stringstream bad(text);
  try {
    read_buffer_csv(bad, "buf.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.file() == "buf.csv");
    CHECK(e.line() == 4);
  }
}

TEST_CASE("trajectory consistency checks chaining and length") {
  Trajectory t;
  t.samples.push_back(plain_sample({0}, {0}, {1}));
  t.samples.push_back(plain_sample({1}, {0}, {2}));
  CHECK(t.is_consistent(5));
  CHECK_FALSE(t.is_consistent(1));
  t.samples.push_back(plain_sample({0}, {0}, {1}));
  CHECK_FALSE(t.is_consistent(5));
}
