#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "survwright/error.hpp"
#include "survwright/eval.hpp"
#include "survwright/stats.hpp"

using namespace survwright;
using namespace survwright::eval;

namespace {

// O(N^2) pair enumeration.
double brute_cindex(const std::vector<double>& r, const std::vector<double>& t, const std::vector<std::uint8_t>& e) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!e[i]) continue;
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!(t[i] < t[j])) continue;
      den += 1;
      num += r[i] > r[j] ? 1.0 : (r[i] == r[j] ? 0.5 : 0.0);
    }
  }
  return num / den;
}

}  // namespace

TEST_CASE("c-index extremes and errors") {
  std::vector<double> t{1, 2, 3};
  std::vector<std::uint8_t> e{1, 1, 1};
  CHECK(concordance_index(std::vector<double>{3, 2, 1}, t, e) == 1.0);
  CHECK(concordance_index(std::vector<double>{1, 2, 3}, t, e) == 0.0);
  CHECK(concordance_index(std::vector<double>{1, 1, 1}, t, e) == 0.5);
  CHECK_THROWS_AS(concordance_index(std::vector<double>{1, 2, 3}, t, std::vector<std::uint8_t>{0, 0, 0}), Error);
}

TEST_CASE("c-index equals brute force") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r, t;
    std::vector<std::uint8_t> e;
    for (int i = 0; i < 200; ++i) {
      // coarse values produce tied scores and tied times
      r.push_back(std::round(4.0 * standard_normal(rng)) / 4.0);
      t.push_back(std::round(20.0 * uniform01(rng)) + 1.0);
      e.push_back(uniform01(rng) < 0.6);
    }
    CHECK(std::abs(concordance_index(r, t, e) - brute_cindex(r, t, e)) < 1e-12);

    // strictly increasing transforms and negation
    std::vector<double> mono, neg;
    for (double v : r) {
      mono.push_back(std::exp(3.0 * v) + 1.0);
      neg.push_back(-v);
    }
    CHECK(concordance_index(mono, t, e) == concordance_index(r, t, e));
    std::vector<double> distinct;
    for (int i = 0; i < 200; ++i) distinct.push_back(r[i] + 1e-6 * i);
    std::vector<double> ndistinct;
    for (double v : distinct) ndistinct.push_back(-v);
    CHECK(concordance_index(distinct, t, e) + concordance_index(ndistinct, t, e) == doctest::Approx(1.0));
  }
}

TEST_CASE("bootstrap") {
  auto constant = bootstrap_ci([](std::span<const std::size_t>) { return 0.7; }, 100, 50, 0.95, 3);
  CHECK(constant.low == 0.7);
  CHECK(constant.high == 0.7);

  std::vector<double> x;
  Rng rng(5);
  for (int i = 0; i < 300; ++i) x.push_back(standard_normal(rng));
  auto mean_of = [&](std::span<const std::size_t> rows) {
    double s = 0;
    for (auto i : rows) s += x[i];
    return s / rows.size();
  };
  auto a = bootstrap_ci(mean_of, x.size(), 50, 0.95, 11);
  auto b = bootstrap_ci(mean_of, x.size(), 50, 0.95, 11);
  CHECK(a.low == b.low);
  CHECK(a.high == b.high);
  CHECK(a.low < stats::mean(x));
  CHECK(a.high > stats::mean(x));

  int calls = 0;
  auto flaky = [&](std::span<const std::size_t>) -> double {
    if (++calls % 4 == 0) throw Error("x", "boom");
    return 1.0;
  };
  auto f = bootstrap_ci(flaky, 10, 40, 0.95, 1);
  CHECK(f.rounds_failed == 10);
  CHECK(f.rounds_used == 30);
  auto broken = [](std::span<const std::size_t>) -> double { throw Error("x", "boom"); };
  CHECK_THROWS_AS(bootstrap_ci(broken, 10, 10, 0.95, 1), Error);
  CHECK_THROWS_AS(bootstrap_ci(mean_of, 10, 1, 0.95, 1), Error);
}

TEST_CASE("kaplan-meier") {
  auto km = kaplan_meier(std::vector<double>{1, 2}, std::vector<std::uint8_t>{1, 1});
  CHECK(km(0.5) == 1.0);
  CHECK(km(1.0) == 0.5);
  CHECK(km(2.0) == 0.0);

  auto censored = kaplan_meier(std::vector<double>{1, 2, 3}, std::vector<std::uint8_t>{0, 0, 0});
  CHECK(censored(10.0) == 1.0);

  // no censoring: empirical survival
  Rng rng(2);
  std::vector<double> t;
  for (int i = 0; i < 100; ++i) t.push_back(std::round(10 * uniform01(rng)) + 1);
  std::vector<std::uint8_t> all(100, 1);
  auto emp = kaplan_meier(t, all);
  for (double q : {0.5, 1.0, 3.0, 5.5, 8.0, 11.0}) {
    const double frac = static_cast<double>(std::count_if(t.begin(), t.end(), [&](double v) { return v > q; })) / 100;
    CHECK(emp(q) == doctest::Approx(frac).epsilon(1e-12));
  }
  // scale equivariance in time
  std::vector<double> t2;
  for (double v : t) t2.push_back(3 * v);
  auto scaled = kaplan_meier(t2, all);
  CHECK(scaled(15.0) == emp(5.0));
}

TEST_CASE("calibration bins and ICI") {
  std::vector<double> pred(50, 0.2), t(50, 5.0);
  std::vector<std::uint8_t> e(50, 0);
  for (int i = 0; i < 10; ++i) e[i] = 1;
  auto single = calibration_curve(pred, t, e, 4.0);
  REQUIRE(single.size() == 1);
  CHECK(single[0].count == 50);
  CHECK(*single[0].observed == doctest::Approx(1.0 - kaplan_meier(t, e)(4.0)));

  // nobody followed to the horizon and no events -> not estimable
  std::vector<double> p2{0.1, 0.1, 0.9, 0.9};
  std::vector<double> t2{1, 1, 20, 20};
  std::vector<std::uint8_t> e2{0, 0, 1, 0};
  auto bins = calibration_curve(p2, t2, e2, 10.0, 2);
  REQUIRE(bins.size() == 2);
  CHECK_FALSE(bins[0].observed);
  CHECK(bins[1].observed);

  std::vector<CalibrationBin> exact{{0.1, 0.1, 10}, {0.3, 0.3, 5}};
  CHECK(integrated_calibration_index(exact) == 0.0);
  std::vector<CalibrationBin> one{{0.2, 0.25, 7}};
  CHECK(integrated_calibration_index(one) == doctest::Approx(0.05));
  std::vector<CalibrationBin> ab{{0.1, 0.15, 10}, {0.3, 0.2, 30}}, ba{{0.3, 0.2, 30}, {0.1, 0.15, 10}};
  CHECK(integrated_calibration_index(ab) == integrated_calibration_index(ba));

  std::vector<double> spread(1000), tt(1000, 12.0);
  std::vector<std::uint8_t> ee(1000, 0);
  for (int i = 0; i < 1000; ++i) spread[i] = i / 1000.0;
  auto deciles = calibration_curve(spread, tt, ee);
  CHECK(deciles.size() == 10);
  std::size_t total = 0;
  for (std::size_t k = 0; k < deciles.size(); ++k) {
    total += deciles[k].count;
    if (k) CHECK(deciles[k].mean_predicted > deciles[k - 1].mean_predicted);
  }
  CHECK(total == 1000);
  auto smooth = smooth_calibration(deciles);
  CHECK(smooth.size() == 10);
  CHECK(calibration_csv(deciles).rfind("bin,mean_predicted,observed,count\n", 0) == 0);
}

TEST_CASE("report formats") {
  CHECK(format_cindex(0.74431, {0.74409, 0.74452}) == "0.7443 [0.7441 – 0.7445]");
  CHECK(format_percent(0.00295) == "0.295%");

  Rng rng(6);
  std::vector<double> s, p, t;
  std::vector<std::uint8_t> e;
  for (int i = 0; i < 400; ++i) {
    const double eta = standard_normal(rng);
    s.push_back(eta);
    p.push_back(1 - std::exp(-0.05 * 10 * std::exp(eta)));
    const double time = -std::log(uniform_open(rng)) / (0.05 * std::exp(eta));
    t.push_back(std::min(time, 10.0));
    e.push_back(time <= 10.0);
  }
  auto report = evaluate(s, p, t, e);
  CHECK(report.c_index_ci.low <= report.c_index);
  CHECK(report.c_index <= report.c_index_ci.high);
  auto j = to_json(report);
  CHECK(j["calibration_bins"].size() == report.bins.size());
  CHECK(j["c_index_text"].get<std::string>().find(" [") != std::string::npos);
}
