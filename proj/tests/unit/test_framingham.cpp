#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "survwright/error.hpp"
#include "survwright/framingham.hpp"
#include "survwright/stats.hpp"
#include "survwright/synth.hpp"

using namespace survwright;
using namespace survwright::framingham;

namespace {

CoefficientSet shipped() { return load_coefficients(std::filesystem::path(SURVWRIGHT_SOURCE_DIR) / "data/framingham_2008.json"); }

FraminghamInput profile(bool female, double age, double tc, double hdl, double sbp, bool treated, bool smoker,
                        bool diabetes) {
  return {female, age, tc, hdl, sbp, treated, smoker, diabetes};
}

cohort::RawColumn numbers(std::vector<std::optional<double>> v) {
  cohort::RawColumn c;
  c.kind = cohort::FeatureKind::continuous;
  c.numbers = std::move(v);
  return c;
}

}  // namespace

TEST_CASE("reference profiles match the formula oracle") {
  const auto c = shipped();
  CHECK(c.provenance.find("Circulation 2008") != std::string::npos);
  struct Case {
    FraminghamInput in;
    double lp, risk;
  };
  // hand-evaluated: L = sum of terms, risk = 1 - S0^exp(L - mean)
  const Case cases[] = {
      {profile(true, 61, 180, 47, 124, false, true, false), 26.965324388204856, 0.10484180203720028},
      {profile(true, 45, 200, 60, 130, true, false, false), 26.1102394501582, 0.04600625311438289},
      {profile(true, 70, 240, 40, 160, true, true, true), 29.453211165542243, 0.7363214405210621},
      {profile(false, 53, 161, 55, 125, true, false, true), 24.35090521465525, 0.15622654200203556},
      {profile(false, 40, 180, 45, 120, false, false, false), 22.831770257610778, 0.036502138934182304},
      {profile(false, 65, 220, 38, 150, false, true, false), 25.78702471522384, 0.51041539011472},
  };
  for (const auto& k : cases) {
    CHECK(std::abs(linear_predictor(k.in, c) - k.lp) < 1e-9);
    CHECK(std::abs(framingham_risk(k.in, c) - k.risk) < 1e-6);
  }
}

TEST_CASE("unit conversion is exact") {
  CHECK(mmol_to_mg_dl(5.0) == 5.0 * 38.67);
  CHECK(mmol_to_mg_dl(5.0) == doctest::Approx(193.35));
  CHECK(mmol_to_mg_dl(1.3) == 1.3 * 38.67);
}

TEST_CASE("centered predictor gives one minus baseline survival") {
  auto c = shipped();
  auto in = profile(true, 50, 200, 50, 120, false, false, false);
  c.female.mean_linear_predictor = linear_predictor(in, c);
  CHECK(framingham_risk(in, c) == doctest::Approx(1.0 - c.female.baseline_survival_10y).epsilon(1e-14));
}

TEST_CASE("risk is monotone in each term by coefficient sign") {
  const auto c = shipped();
  for (bool female : {true, false}) {
    const auto base = profile(female, 55, 210, 50, 135, false, false, false);
    const double r0 = framingham_risk(base, c);
    CHECK(r0 > 0.0);
    CHECK(r0 < 1.0);
    auto up = [&](auto mutate) {
      auto in = base;
      mutate(in);
      return framingham_risk(in, c);
    };
    CHECK(up([](auto& in) { in.age += 5; }) > r0);
    CHECK(up([](auto& in) { in.total_cholesterol += 20; }) > r0);
    CHECK(up([](auto& in) { in.hdl_cholesterol += 10; }) < r0);
    CHECK(up([](auto& in) { in.sbp += 10; }) > r0);
    CHECK(up([](auto& in) { in.sbp_treated = true; }) > r0);
    CHECK(up([](auto& in) { in.current_smoker = true; }) > r0);
    CHECK(up([](auto& in) { in.diabetes = true; }) > r0);
  }
}

TEST_CASE("nonpositive log inputs are rejected by name") {
  const auto c = shipped();
  auto in = profile(false, 50, 200, 0, 120, false, false, false);
  CHECK_THROWS_WITH_AS(framingham_risk(in, c), doctest::Contains("hdl_cholesterol"), Error);
  in.hdl_cholesterol = 50;
  in.sbp = -1;
  CHECK_THROWS_WITH_AS(framingham_risk(in, c), doctest::Contains("sbp"), Error);
}

TEST_CASE("coefficient file contract") {
  const auto c = shipped();
  const auto doc = to_json(c);
  const auto back = coefficients_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(to_json(back) == doc);
  CHECK(back.male.ln_age == c.male.ln_age);

  auto no_female = doc;
  no_female.erase("female");
  CHECK_THROWS_WITH_AS(coefficients_from_json(no_female), "missing sex block: female", Error);
  auto no_s0 = doc;
  no_s0["male"].erase("baseline_survival_10y");
  CHECK_THROWS_WITH_AS(coefficients_from_json(no_s0), doctest::Contains("baseline_survival_10y"), Error);
  auto bad_s0 = doc;
  bad_s0["male"]["baseline_survival_10y"] = 1.2;
  CHECK_THROWS_AS(coefficients_from_json(bad_s0), Error);
  CHECK_THROWS_AS(load_coefficients("/nonexistent/coeffs.json"), Error);
}

TEST_CASE("input derivation") {
  cohort::RawCohort raw;
  raw.row_ids = {"a", "b", "c", "d"};
  raw.columns["sex"] = numbers({1, 0, 1, 0});
  raw.columns["age"] = numbers({61, 53, 50, 44});
  raw.columns["total_cholesterol"] = numbers({5.0, 4.2, 5.5, 6.0});
  raw.columns["hdl_cholesterol"] = numbers({1.3, 1.4, std::nullopt, 1.1});
  raw.columns["sbp_1"] = numbers({130, 120, 150, 140});
  raw.columns["sbp_2"] = numbers({140, 124, 150, 142});
  raw.columns["bp_medication"] = numbers({0, 1, 0, 0});
  raw.columns["diabetes"] = numbers({0, 1, 0, 1});
  cohort::RawColumn smoke;
  smoke.kind = cohort::FeatureKind::categorical;
  smoke.labels = {"current", "never", "previous", "previous"};
  raw.columns["smoking_status"] = smoke;
  raw.outcome_fields["assessment_date"] = {1000, 1000, 1000, 1000};
  // d's diabetes diagnosis comes after assessment
  raw.outcome_fields["diabetes_date"] = {std::nullopt, 900, std::nullopt, 1200};

  const auto d = derive_framingham_inputs(raw);
  REQUIRE(d.inputs.size() == 3);
  CHECK(d.rows == std::vector<std::size_t>{0, 1, 3});
  REQUIRE(d.excluded.size() == 1);
  CHECK(d.excluded[0].first == 2);
  CHECK(d.excluded[0].second == "missing hdl_cholesterol");

  const auto& a = d.inputs[0];
  CHECK(a.female);
  CHECK(a.total_cholesterol == 5.0 * 38.67);
  CHECK(a.total_cholesterol == doctest::Approx(193.35));
  CHECK(a.hdl_cholesterol == 1.3 * 38.67);
  CHECK(a.sbp == 135.0);
  CHECK(a.current_smoker);
  CHECK(!a.sbp_treated);
  CHECK(d.inputs[1].sbp_treated);
  CHECK(d.inputs[1].diabetes);
  CHECK(!d.inputs[2].diabetes);
  CHECK(!d.inputs[2].current_smoker);

  FieldMap missing_col;
  missing_col.age = "age_years";
  CHECK_THROWS_AS(derive_framingham_inputs(raw, missing_col), Error);
}

TEST_CASE("derivation on the synthetic biobank-like cohort") {
  synth::CohortTemplate t;
  t.n = 3000;
  t.seed = 4;
  const auto cohort = synth::generate_biobank_cohort(t);
  const auto d = derive_framingham_inputs(cohort.raw);
  CHECK(d.inputs.size() + d.excluded.size() == 3000);
  CHECK(d.excluded.size() > 0);
  CHECK(d.inputs.size() > 2000);
  const auto risks = framingham_risks(d.inputs, shipped());
  for (double r : risks) {
    CHECK(r > 0.0);
    CHECK(r < 1.0);
  }
}

TEST_CASE("refit beats the fixed formula on data from a different 7-term model") {
  Rng rng(12);
  const std::size_t n = 4000;
  std::vector<FraminghamInput> inputs;
  OutcomeColumn y;
  for (std::size_t i = 0; i < n; ++i) {
    FraminghamInput in;
    in.female = uniform01(rng) < 0.5;
    in.age = 40 + 30 * uniform01(rng);
    in.total_cholesterol = 200 * std::exp(0.15 * standard_normal(rng));
    in.hdl_cholesterol = 50 * std::exp(0.2 * standard_normal(rng));
    in.sbp = 130 * std::exp(0.1 * standard_normal(rng));
    in.sbp_treated = uniform01(rng) < 0.2;
    in.current_smoker = uniform01(rng) < 0.2;
    in.diabetes = uniform01(rng) < 0.1;
    // truth: weak age effect, strong smoking and HDL terms
    const double eta = 0.5 * std::log(in.age / 55) + 0.3 * std::log(in.total_cholesterol / 200) -
                       2.5 * std::log(in.hdl_cholesterol / 50) + 1.0 * std::log(in.sbp / 130) +
                       1.5 * in.current_smoker + 1.2 * in.diabetes;
    const double t = -std::log(uniform_open(rng)) / (0.02 * std::exp(eta));
    y.duration.push_back(std::min(t, 10.0));
    y.event.push_back(t <= 10.0);
    inputs.push_back(in);
  }
  const auto c = shipped();
  const auto formula = framingham_risks(inputs, c);
  const auto refit = refit_cox(inputs, y);
  std::vector<bool> female;
  for (const auto& in : inputs) female.push_back(in.female);

  const auto report = compare_scores({{"Published formula", formula}, {"Cox refit", refit.risks}}, female, y);
  REQUIRE(report.rows.size() == 6);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(report.rows[k].score == "Published formula");
    CHECK(report.rows[k + 3].cindex >= report.rows[k].cindex);
  }
  CHECK(report.rows[0].scope == "female");
  CHECK(report.rows[2].scope == "all");
  CHECK(report.rows[2].n == n);
  CHECK(refit.female.column_names == refit_columns());

  const auto same = compare_scores({{"a", formula}, {"b", formula}}, female, y);
  for (std::size_t k = 0; k < 3; ++k) CHECK(same.rows[k].cindex == same.rows[k + 3].cindex);

  const auto table = render_comparison(report);
  CHECK(table.find("Published formula") != std::string::npos);
  CHECK(table.find("Female") != std::string::npos);
  CHECK(to_json(report)["rows"].size() == 6);
}
