#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "grader/error.hpp"
#include "grader/factor.hpp"

using namespace grader;

TEST_CASE("discrete encoding is one-hot per component") {
  const FactorLayout layout({FactorSpace::discrete("a", 3), FactorSpace::discrete("b", 4, 2)});
  CHECK(layout.width() == 3);
  CHECK(layout.encoded_dim() == 3 + 8);
  const std::vector<double> v{2, 1, 3};
  const std::vector<double> e = layout.encode(v);
  const std::vector<double> expected{0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 1};
  CHECK(e == expected);
}

TEST_CASE("zero_first encodes category zero as the zero vector") {
  const FactorSpace s = FactorSpace::discrete("slot", 6, 5, true);
  CHECK(s.encoded_dim() == 25);
  const FactorLayout layout({s});
  const std::vector<double> v{0, 1, 5, 0, 0};
  const std::vector<double> e = layout.encode(v);
  double sum = 0.0;
  for (double x : e) sum += x;
  CHECK(sum == 2.0);
  CHECK(e[0 * 5 + 0] == 0.0);
  CHECK(e[1 * 5 + 0] == 1.0);
  CHECK(e[2 * 5 + 4] == 1.0);
}

TEST_CASE("continuous values normalize to [-1, 1]") {
  CHECK(normalize(0.0, -2.0, 2.0) == doctest::Approx(0.0));
  CHECK(normalize(2.0, -2.0, 2.0) == doctest::Approx(1.0));
  CHECK(normalize(-10.0, -10.0, 70.0) == doctest::Approx(-1.0));
  for (double x : {-3.0, 0.25, 7.0}) CHECK(denormalize(normalize(x, -4.0, 9.0), -4.0, 9.0) == doctest::Approx(x));
  const FactorLayout layout({FactorSpace::continuous("p", {0.0, -1.0}, {10.0, 1.0})});
  const std::vector<double> e = layout.encode(std::vector<double>{5.0, 1.0});
  CHECK(e[0] == doctest::Approx(0.0));
  CHECK(e[1] == doctest::Approx(1.0));
}

TEST_CASE("factor space invariants are enforced") {
  CHECK_THROWS_AS(FactorSpace::discrete("x", 1).validate(), ConfigError);
  CHECK_THROWS_AS(FactorSpace::continuous("x", {1.0}, {1.0}).validate(), ConfigError);
  CHECK_THROWS_AS(FactorLayout({FactorSpace::discrete("x", 2), FactorSpace::discrete("x", 3)}), ConfigError);
}

TEST_CASE("values outside their domain are rejected") {
  const FactorLayout layout({FactorSpace::discrete("d", 3), FactorSpace::continuous("c", {0.0}, {1.0})});
  CHECK(layout.contains(std::vector<double>{2, 0.5}));
  CHECK_FALSE(layout.contains(std::vector<double>{3, 0.5}));
  CHECK_FALSE(layout.contains(std::vector<double>{1.5, 0.5}));
  CHECK_FALSE(layout.contains(std::vector<double>{1, 1.5}));
  CHECK_THROWS_AS(layout.validate(std::vector<double>{0, 2.0}), DomainError);
  CHECK_THROWS_AS(layout.validate(std::vector<double>{0}), DimensionError);
}

TEST_CASE("category keys are a bijection on the value set") {
  const FactorSpace s = FactorSpace::discrete("t", 3, 2);
  std::vector<std::int64_t> keys;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) keys.push_back(category_key(s, std::vector<double>{double(a), double(b)}));
  std::sort(keys.begin(), keys.end());
  CHECK(std::unique(keys.begin(), keys.end()) == keys.end());
  CHECK(keys.size() == 9);
}

TEST_CASE("layout JSON round-trips") {
  const FactorLayout layout({FactorSpace::discrete("d", 6, 5, true), FactorSpace::continuous("c", {-1.0, 0.0}, {1.0, 3.5})});
  const nlohmann::json j = layout;
  CHECK(j.get<FactorLayout>() == layout);
  CHECK(layout.index_of("c") == 1);
  CHECK(layout.encoded_offset(1) == 25);
}
