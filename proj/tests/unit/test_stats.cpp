#include <doctest.h>

#include <cmath>

#include "survwright/stats.hpp"

using namespace survwright;

TEST_CASE("type 7 quantiles") {
  std::vector<double> v{1, 2, 3, 4};
  CHECK(stats::quantile_sorted(v, 0.0) == 1.0);
  CHECK(stats::quantile_sorted(v, 1.0) == 4.0);
  CHECK(stats::quantile_sorted(v, 0.5) == 2.5);
  CHECK(stats::quantile_sorted(v, 0.25) == doctest::Approx(1.75));
  CHECK(stats::quantile({5.0}, 0.975) == 5.0);
}

TEST_CASE("normal p-values") {
  CHECK(stats::normal_two_sided_p(0.0) == doctest::Approx(1.0));
  CHECK(std::abs(stats::normal_two_sided_p(1.959964) - 0.05) < 1e-6);
}

TEST_CASE("chi-squared independence") {
  // (10,0 / 0,10): statistic 20 without continuity correction
  auto r = stats::chi_squared_independence({{10, 0}, {0, 10}});
  CHECK(r.statistic == doctest::Approx(20.0));
  CHECK(r.df == 1.0);
  REQUIRE(r.p_value);
  CHECK(*r.p_value < 0.001);
  CHECK(*r.p_value == doctest::Approx(7.744216e-06).epsilon(1e-5));

  auto same = stats::chi_squared_independence({{30, 30}, {20, 20}});
  REQUIRE(same.p_value);
  CHECK(*same.p_value == doctest::Approx(1.0));

  // a level never observed gives a zero expected cell
  CHECK_FALSE(stats::chi_squared_independence({{5, 5}, {0, 0}}).p_value);
}

TEST_CASE("kruskal-wallis detects a shift") {
  std::vector<double> a, b;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    a.push_back(standard_normal(rng));
    b.push_back(standard_normal(rng) + 1.0);
  }
  auto r = stats::kruskal_wallis({a, b});
  REQUIRE(r.p_value);
  CHECK(*r.p_value < 0.01);

  // hand check: groups {1,2,3} and {4,5,6}: H = 12/(6*7) * (6^2/3 + 15^2/3) - 3*7 = 3.857142857
  auto h = stats::kruskal_wallis({{1, 2, 3}, {4, 5, 6}});
  CHECK(h.statistic == doctest::Approx(27.0 / 7.0));
}

TEST_CASE("average ranks share ties") {
  auto r = stats::average_ranks(std::vector<double>{10, 20, 20, 5});
  CHECK(r == std::vector<double>{2, 3.5, 3.5, 1});
}

TEST_CASE("standard normal draws") {
  Rng rng(11);
  double s = 0, ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double z = standard_normal(rng);
    s += z;
    ss += z * z;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(ss / n - 1.0) < 0.01);
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
}
