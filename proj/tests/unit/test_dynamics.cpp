#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "grader/dynamics.hpp"
#include "grader/error.hpp"
#include "synthetic.hpp"

using namespace grader;
using grader::testing::discrete_spaces;
using grader::testing::plain_sample;

namespace {

// s0' = a0, s1' = s1.
ReplayBuffer copy_task(int n, std::uint64_t seed) {
  const MdpSpaces sp = discrete_spaces({4, 3}, {4});
  ReplayBuffer buf(sp, n);
  Rng rng(seed);
  for (int k = 0; k < n; ++k) {
    const double a = uniform_int(rng, 0, 3), s1 = uniform_int(rng, 0, 2);
    buf.push(plain_sample({double(uniform_int(rng, 0, 3)), s1}, {a}, {a, s1}, k));
  }
  return buf;
}

TransitionCausalGraph copy_graph() {
  TransitionCausalGraph g(2, 1);
  g.set_edge(2, 0, true);
  g.set_edge(1, 1, true);
  return g;
}

}  // namespace

TEST_CASE("copy task is learned to near-perfect accuracy") {
  const ReplayBuffer buf = copy_task(2000, 1);
  for (const auto& graph : {copy_graph(), full_graph(2, 1)}) {
    FactoredDynamicsModel model(buf.spaces(), graph, DynamicsConfig{16, 0.1, {}, 2});
    const auto report = model.train_epochs(buf, 30, 128, 1e-2, 3);
    CHECK(report.validation_nll.size() == 30);
    CHECK(report.validation_nll.back() < report.validation_nll.front());
    const ReplayBuffer test = copy_task(1000, 4);
    int correct = 0;
    for (const auto& s : test) correct += model.predict(s.state, s.action) == s.next_state;
    CHECK(correct > 990);
  }
}

TEST_CASE("sampled continuous prediction has variance sigma squared") {
  const MdpSpaces sp{FactorLayout({FactorSpace::continuous("x", {-10.0}, {10.0})}),
                     FactorLayout({FactorSpace::discrete("a", 2)})};
  TransitionCausalGraph g(1, 1);
  g.set_edge(0, 0, true);
  const double sigma = 0.1;
  FactoredDynamicsModel model(sp, g, DynamicsConfig{4, sigma, {}, 1});
  const FactoredState s({0.0});
  const FactoredAction a({0});
  const int n = 5000;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < n; ++k) {
    const double z = normalize(model.predict(s, a, PredictMode::sampled, k).values[0], -10.0, 10.0);
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.1));
}

TEST_CASE("deterministic prediction is repeatable and batch-consistent") {
  const ReplayBuffer buf = copy_task(200, 5);
  FactoredDynamicsModel model(buf.spaces(), full_graph(2, 1), DynamicsConfig{8, 0.1, {}, 6});
  Eigen::MatrixXd S(2, 5), A(1, 5), next;
  for (int k = 0; k < 5; ++k) {
    S(0, k) = buf[k].state.values[0];
    S(1, k) = buf[k].state.values[1];
    A(0, k) = buf[k].action.values[0];
  }
  model.predict_batch(S, A, next, {});
  for (int k = 0; k < 5; ++k) {
    const auto p = model.predict(buf[k].state, buf[k].action);
    CHECK(p == model.predict(buf[k].state, buf[k].action));
    CHECK(next(0, k) == p.values[0]);
    CHECK(next(1, k) == p.values[1]);
  }
  model.predict_batch(S, A, next, {true, false});
  CHECK(next.row(1) == S.row(1));
  CHECK_THROWS_AS(model.predict(FactoredState({0}), FactoredAction({0})), ModelInputError);
}

TEST_CASE("rebuild re-initializes only targets whose parents changed") {
  const ReplayBuffer buf = copy_task(500, 7);
  FactoredDynamicsModel model(buf.spaces(), full_graph(2, 1), DynamicsConfig{8, 0.1, {}, 8});
  model.train_epochs(buf, 2, 64, 1e-2, 9);
  const auto keep = model.predictor(1).params();
  const auto old0 = model.predictor(0).params();
  TransitionCausalGraph g = full_graph(2, 1);
  g.set_edge(0, 0, false);
  const auto changed = model.rebuild_for_graph(g);
  CHECK(changed == std::vector<int>{0});
  CHECK(model.predictor(1).params() == keep);
  CHECK(model.predictor(0).params() != old0);
  CHECK(model.graph() == g);
  CHECK(model.rebuild_for_graph(g).empty());
}

TEST_CASE("parameter count shrinks with fewer edges") {
  const MdpSpaces sp = discrete_spaces({4, 3}, {4});
  const FactoredDynamicsModel full(sp, full_graph(2, 1), DynamicsConfig{});
  const FactoredDynamicsModel sparse(sp, copy_graph(), DynamicsConfig{});
  CHECK(sparse.parameter_count() < full.parameter_count());
}

TEST_CASE("checkpoint round-trips parameters and predictions") {
  const ReplayBuffer buf = copy_task(300, 10);
  FactoredDynamicsModel model(buf.spaces(), copy_graph(), DynamicsConfig{8, 0.2, {}, 11});
  model.train_epochs(buf, 3, 64, 1e-2, 12);
  const auto path = (std::filesystem::temp_directory_path() / "grader_dyn_ckpt.json").string();
  model.save(path);
  const FactoredDynamicsModel back = FactoredDynamicsModel::load(path);
  std::filesystem::remove(path);
  CHECK(back.graph() == model.graph());
  CHECK(back.config().sigma == 0.2);
  for (int j = 0; j < model.num_targets(); ++j) CHECK(back.predictor(j).params() == model.predictor(j).params());
  for (std::size_t k = 0; k < 20; ++k) CHECK(back.predict(buf[k].state, buf[k].action) == model.predict(buf[k].state, buf[k].action));
  const auto rows = std::vector<TransitionSample>(buf.begin(), buf.begin() + 50);
  CHECK(back.log_likelihood(rows) == model.log_likelihood(rows));
}

TEST_CASE("training is deterministic in its seeds") {
  const ReplayBuffer buf = copy_task(300, 13);
  FactoredDynamicsModel a(buf.spaces(), full_graph(2, 1), DynamicsConfig{8, 0.1, {}, 14});
  FactoredDynamicsModel b(buf.spaces(), full_graph(2, 1), DynamicsConfig{8, 0.1, {}, 14});
  const auto ra = a.train_epochs(buf, 2, 32, 1e-2, 15);
  const auto rb = b.train_epochs(buf, 2, 32, 1e-2, 15);
  CHECK(ra.loss_curve == rb.loss_curve);
  CHECK(a.to_checkpoint() == b.to_checkpoint());
}

TEST_CASE("non-finite parameters surface as errors") {
  const ReplayBuffer buf = copy_task(200, 16);
  FactoredDynamicsModel model(buf.spaces(), copy_graph(), DynamicsConfig{8, 0.1, {}, 17});
  model.predictor(1).params()[0] = std::numeric_limits<double>::quiet_NaN();
  const auto rows = std::vector<TransitionSample>(buf.begin(), buf.begin() + 20);
  CHECK_THROWS_AS(model.factor_log_likelihood(encode_samples(buf.spaces(), rows)), NumericError);
  CHECK_THROWS_AS(model.train_epochs(buf, 1, 32, 1e-2, 18), OptimizationError);
}

TEST_CASE("relevant_targets closes over state parents of goal factors") {
  TransitionCausalGraph g(3, 1);
  g.set_edge(1, 0, true);
  g.set_edge(1, 1, true);
  g.set_edge(3, 1, true);
  g.set_edge(2, 2, true);
  Goal goal;
  goal.terms.push_back({0, {1.0}, 0.0});
  CHECK(relevant_targets(g, goal) == std::vector<bool>{true, true, false});
  Goal other;
  other.terms.push_back({2, {0.0}, 0.0});
  CHECK(relevant_targets(g, other) == std::vector<bool>{false, false, true});
}
