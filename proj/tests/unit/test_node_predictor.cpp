#include <doctest.h>

#include <cmath>

#include "grader/dynamics.hpp"
#include "grader/node_predictor.hpp"
#include "synthetic.hpp"

using namespace grader;
using grader::testing::discrete_spaces;
using grader::testing::plain_sample;

namespace {

MdpSpaces mixed_spaces() {
  return MdpSpaces{FactorLayout({FactorSpace::discrete("d", 3, 2), FactorSpace::continuous("c", {-2.0, 0.0}, {2.0, 4.0})}),
                   FactorLayout({FactorSpace::discrete("u", 4), FactorSpace::continuous("v", {-1.0}, {1.0})})};
}

std::vector<TransitionSample> random_samples(const MdpSpaces& sp, int n, std::uint64_t seed) {
  Rng rng(seed);
  auto draw = [&](const FactorLayout& layout) {
    std::vector<double> v;
    for (const auto& f : layout.spaces()) {
      for (int d = 0; d < f.width(); ++d) {
        v.push_back(f.is_discrete() ? double(uniform_int(rng, 0, f.cardinality - 1)) : uniform_real(rng, f.lo[d], f.hi[d]));
      }
    }
    return v;
  };
  std::vector<TransitionSample> out;
  for (int k = 0; k < n; ++k) out.push_back(plain_sample(draw(sp.state), draw(sp.action), draw(sp.state), k));
  return out;
}

// Central-difference derivative of the gated loss with respect to gate g.
double numeric_gate_grad(const NodePredictor& p, const EncodedBatch& b, std::vector<double> gates, int g, double h) {
  gates[g] += h;
  const double up = p.loss(b, {}, gates);
  gates[g] -= 2 * h;
  const double down = p.loss(b, {}, gates);
  return (up - down) / (2 * h);
}

}  // namespace

TEST_CASE("analytic gradients match finite differences") {
  const MdpSpaces sp = mixed_spaces();
  const auto data = random_samples(sp, 16, 1);
  for (const auto& g : {full_graph(2, 2), empty_graph(2, 2)}) {
    TransitionCausalGraph graph = g;
    graph.set_edge(3, 0, true);  // every target keeps at least one parent
    graph.set_edge(2, 1, true);
    FactoredDynamicsModel model(sp, graph, DynamicsConfig{8, 0.1, {}, 3});
    const auto report = model.gradient_check(data, 1e-5, 1e-4, 200, 4);
    CHECK(report.checked > 0);
    INFO("worst " << report.worst_parameter << " analytic " << report.worst_analytic << " numeric "
                  << report.worst_numeric);
    CHECK(report.passed);
  }
}

TEST_CASE("gate gradients match finite differences") {
  const MdpSpaces sp = mixed_spaces();
  const auto data = random_samples(sp, 12, 2);
  const EncodedBatch batch = encode_samples(sp, data);
  for (int target : {0, 1}) {
    NodePredictor p(sp, target, 6, {target, 1 - target, 2, 3}, 7);
    const std::vector<double> gates{0.3, 0.8, 0.5, 0.9};
    std::vector<double> grad(p.params().size()), gate_grad(gates.size());
    p.loss(batch, grad, gates, gate_grad);
    for (int g = 0; g < 4; ++g) {
      const double num = numeric_gate_grad(p, batch, gates, g, 1e-6);
      CHECK(gate_grad[g] == doctest::Approx(num).epsilon(1e-5));
    }
  }
}

TEST_CASE("outputs ignore every non-parent source") {
  const MdpSpaces sp = mixed_spaces();
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int target = trial % 2;
    NodePredictor p(sp, target, 8, {target, 2}, 100 + trial);
    auto data = random_samples(sp, 4, 200 + trial);
    const Eigen::MatrixXd before = p.output(encode_samples(sp, data));
    for (auto& s : data) {
      // Non-parents: the other state factor and action factor 3.
      const int other = 1 - target;
      const int off = sp.state.offset(other);
      for (int d = 0; d < sp.state[other].width(); ++d) {
        s.state.values[off + d] = sp.state[other].is_discrete() ? double(uniform_int(rng, 0, 2))
                                                                  : uniform_real(rng, sp.state[other].lo[d], sp.state[other].hi[d]);
      }
      s.action.values[1] = uniform_real(rng, -1, 1);
    }
    const Eigen::MatrixXd after = p.output(encode_samples(sp, data));
    REQUIRE((before - after).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("parameter names address every block") {
  const MdpSpaces sp = discrete_spaces({3}, {2});
  NodePredictor p(sp, 0, 4, {0, 1}, 1);
  CHECK(p.has_own_parent());
  CHECK_FALSE(p.continuous());
  CHECK(p.output_dim() == 3);
  CHECK_FALSE(p.param_name(0).empty());
  CHECK_FALSE(p.param_name(p.params().size() - 1).empty());

  NodePredictor orphan(sp, 0, 4, {1}, 1);
  CHECK_FALSE(orphan.has_own_parent());
}

TEST_CASE("reinitialize is deterministic in the seed") {
  const MdpSpaces sp = mixed_spaces();
  NodePredictor a(sp, 1, 5, {1, 3}, 9);
  NodePredictor b(sp, 1, 5, {1, 3}, 10);
  CHECK(a.params() != b.params());
  b.reinitialize(9);
  CHECK(a.params() == b.params());
}
