#include <doctest.h>

#include <vector>

#include "grader/regression_tree.hpp"
#include "grader/rng.hpp"
#include "grader/stats.hpp"

using namespace grader;
using namespace grader::stats;

namespace {

void columns_from_table(const std::vector<std::vector<int>>& table, std::vector<std::int64_t>& x,
                        std::vector<std::int64_t>& y) {
  for (std::size_t r = 0; r < table.size(); ++r)
    for (std::size_t c = 0; c < table[r].size(); ++c)
      for (int k = 0; k < table[r][c]; ++k) {
        x.push_back(static_cast<std::int64_t>(r));
        y.push_back(static_cast<std::int64_t>(c));
      }
}

}  // namespace

// Reference values below were computed with scipy.stats.
TEST_CASE("chi-squared and t tails match reference values") {
  CHECK(chi_square_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi_square_sf(12.0, 4) == doctest::Approx(0.01735126523666451).epsilon(1e-9));
  CHECK(chi_square_sf(0.5, 3) == doctest::Approx(0.9188914116546758).epsilon(1e-9));
  CHECK(chi_square_sf(5.0, 0) == 1.0);
  CHECK(student_t_sf(1.812461122999, 10) == doctest::Approx(0.05).epsilon(1e-8));
  CHECK(student_t_sf(-0.7, 5) == doctest::Approx(0.7424255258425918).epsilon(1e-9));
  CHECK(student_t_sf(2.5, 30) == doctest::Approx(0.009057824534033353).epsilon(1e-9));
}

TEST_CASE("Pearson statistic on dense tables") {
  std::vector<std::int64_t> x, y;
  columns_from_table({{30, 10}, {15, 45}}, x, y);
  auto r = chi_square_independence(x, y);
  CHECK(r.statistic == doctest::Approx(24.242424242424242));
  CHECK(r.df == 1);
  CHECK(r.p_value == doctest::Approx(8.494052234341352e-07).epsilon(1e-6));

  x.clear();
  y.clear();
  columns_from_table({{20, 15, 25}, {30, 35, 15}, {10, 20, 30}}, x, y);
  r = chi_square_independence(x, y);
  CHECK(r.statistic == doctest::Approx(19.444444444444443));
  CHECK(r.df == 4);
  CHECK(r.p_value == doctest::Approx(0.0006426541863608164).epsilon(1e-6));
}

TEST_CASE("deterministic copy gives a vanishing p-value") {
  Rng rng(5);
  std::vector<std::int64_t> x(500), y(500);
  for (int k = 0; k < 500; ++k) x[k] = y[k] = uniform_int(rng, 0, 3);
  CHECK(chi_square_independence(x, y).p_value < 1e-6);
}

TEST_CASE("constant column gives p = 1") {
  std::vector<std::int64_t> x(200, 2), y(200);
  Rng rng(6);
  for (auto& v : y) v = uniform_int(rng, 0, 2);
  const auto r = chi_square_independence(x, y);
  CHECK(r.p_value == 1.0);
  CHECK(r.statistic == 0.0);
}

TEST_CASE("sparse tables are merged until expected counts reach 5") {
  // Row 2 has only three observations; merging keeps the test valid.
  std::vector<std::int64_t> x, y;
  columns_from_table({{40, 35, 30}, {35, 40, 30}, {1, 1, 1}}, x, y);
  const auto r = chi_square_independence(x, y);
  CHECK(r.df <= 2);
  CHECK(r.p_value > 0.05);
}

TEST_CASE("independent columns are rejected at about the nominal rate") {
  Rng rng(7);
  int rejections = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::int64_t> x(500), y(500);
    for (int k = 0; k < 500; ++k) {
      x[k] = uniform_int(rng, 0, 3);
      y[k] = uniform_int(rng, 0, 3);
    }
    rejections += chi_square_independence(x, y).p_value <= 0.01;
  }
  CHECK(rejections <= 5);
}

TEST_CASE("stratified test detects dependence hidden inside strata") {
  // y = x XOR z: marginally independent of x, dependent given z.
  Rng rng(8);
  std::vector<std::int64_t> x(1000), y(1000), z(1000);
  for (int k = 0; k < 1000; ++k) {
    x[k] = uniform_int(rng, 0, 1);
    z[k] = uniform_int(rng, 0, 1);
    y[k] = x[k] ^ z[k];
  }
  CHECK(chi_square_independence(x, y).p_value > 0.001);
  const auto r = chi_square_independence(x, y, z);
  CHECK(r.p_value < 1e-10);
  CHECK(r.informative_strata == 2);
  CHECK(r.informative_samples == 1000);
}

TEST_CASE("paired one-sided t-test matches reference values") {
  const std::vector<double> a{1.2, 0.8, 1.9, 1.4, 0.7, 1.1, 1.6, 1.3};
  const std::vector<double> b{1.0, 0.9, 1.5, 1.2, 0.8, 0.9, 1.1, 1.2};
  const auto r = paired_t_test_greater(a, b);
  CHECK(r.t == doctest::Approx(2.3333333333333335));
  CHECK(r.p_value == doctest::Approx(0.02617815327745113).epsilon(1e-8));
  CHECK(r.n == 8);
}

TEST_CASE("correlation") {
  const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{1, 1, 1, 1};
  CHECK(correlation(a, b) == doctest::Approx(1.0));
  CHECK(correlation(a, c) == 0.0);
}

TEST_CASE("regression tree recovers a step function exactly") {
  const int n = 400;
  Eigen::MatrixXd X(n, 2), Y(n, 1);
  Rng rng(9);
  for (int k = 0; k < n; ++k) {
    X(k, 0) = uniform_real(rng, 0, 1);
    X(k, 1) = uniform_real(rng, 0, 1);
    Y(k, 0) = X(k, 0) < 0.5 ? -1.0 : 2.0;
  }
  std::vector<int> rows(n);
  for (int k = 0; k < n; ++k) rows[k] = k;
  const std::vector<int> both{0, 1};
  RegressionTree tree;
  tree.fit(X, Y, rows, both);
  for (int k = 0; k < n; ++k) REQUIRE(tree.predict(X, k)(0) == doctest::Approx(Y(k, 0)));

  RegressionTree flat;
  flat.fit(X, Y, rows, std::vector<int>{});
  CHECK(flat.node_count() == 1);
  CHECK(flat.predict(X, 0)(0) == doctest::Approx(Y.mean()));
}
