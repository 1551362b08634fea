#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "survwright/cox.hpp"
#include "survwright/kernels.hpp"
#include "survwright/stats.hpp"
#include "survwright/synth.hpp"

using namespace survwright;
using namespace survwright::cox;

namespace {

struct Instance {
  Matrix x;
  OutcomeColumn y;
  std::vector<double> beta;
};

// Durations drawn from a few integer values so tied event times are common.
Instance random_instance(Rng& rng, std::size_t n, std::size_t p, bool ties) {
  Instance in;
  in.x = Matrix(n, p);
  for (auto& v : in.x.flat()) v = standard_normal(rng);
  for (std::size_t j = 0; j < p; ++j) in.beta.push_back(0.5 * standard_normal(rng));
  for (std::size_t i = 0; i < n; ++i) {
    in.y.duration.push_back(ties ? 1.0 + std::floor(5.0 * uniform01(rng)) : 0.1 + uniform01(rng));
    in.y.event.push_back(uniform01(rng) < 0.7 ? 1 : 0);
  }
  in.y.event[0] = 1;
  return in;
}

double relerr(double a, double b) { return std::abs(a - b) / std::max(1e-3, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST_CASE("partial likelihood closed forms") {
  Matrix x(2, 1);
  x(0, 0) = 0.3;
  x(1, 0) = -1.2;
  OutcomeColumn y{{1.0, 2.0}, {1, 1}};
  std::vector<double> zero{0.0};
  CHECK(partial_loglik(zero, x, y).value == doctest::Approx(-std::log(2.0)));

  const std::size_t n = 7;
  Matrix xn(n, 2, 0.5);
  OutcomeColumn yn;
  for (std::size_t i = 0; i < n; ++i) {
    yn.duration.push_back(1.0 + i);
    yn.event.push_back(i == 0 ? 1 : 0);
  }
  std::vector<double> z2{0.0, 0.0};
  CHECK(partial_loglik(z2, xn, yn).value == doctest::Approx(-std::log(static_cast<double>(n))));

  OutcomeColumn none{{1.0, 2.0}, {0, 0}};
  CHECK_THROWS_AS(partial_loglik(zero, x, none), Error);
}

TEST_CASE("efron and breslow agree without ties and differ with them") {
  Rng rng(4);
  auto a = random_instance(rng, 30, 2, false);
  CHECK(partial_loglik(a.beta, a.x, a.y, Ties::efron).value ==
        doctest::Approx(partial_loglik(a.beta, a.x, a.y, Ties::breslow).value).epsilon(1e-14));
  auto b = random_instance(rng, 30, 2, true);
  CHECK(partial_loglik(b.beta, b.x, b.y, Ties::efron).value !=
        doctest::Approx(partial_loglik(b.beta, b.x, b.y, Ties::breslow).value));

  // hand-computed Efron value: two tied deaths at t=1 among three subjects, beta = 0
  // -ln 3 - ln(3 - 1/2 * 2) = -ln 3 - ln 2
  Matrix x(3, 1, 0.0);
  OutcomeColumn y{{1.0, 1.0, 2.0}, {1, 1, 0}};
  std::vector<double> zero{0.0};
  CHECK(partial_loglik(zero, x, y, Ties::efron).value == doctest::Approx(-std::log(3.0) - std::log(2.0)));
  CHECK(partial_loglik(zero, x, y, Ties::breslow).value == doctest::Approx(-2.0 * std::log(3.0)));
}

TEST_CASE("gradient and hessian match finite differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 24; ++trial) {
    const bool ties = trial % 2 == 0;
    const Ties method = trial % 4 < 2 ? Ties::efron : Ties::breslow;
    auto in = random_instance(rng, 10 + trial % 40, 1 + trial % 5, ties);
    const auto ll = partial_loglik(in.beta, in.x, in.y, method);
    const double h = 1e-5;
    for (std::size_t j = 0; j < in.beta.size(); ++j) {
      auto up = in.beta, down = in.beta;
      up[j] += h;
      down[j] -= h;
      const auto lu = partial_loglik(up, in.x, in.y, method);
      const auto ld = partial_loglik(down, in.x, in.y, method);
      CHECK(relerr(ll.gradient[j], (lu.value - ld.value) / (2 * h)) < 1e-5);
      for (std::size_t k = 0; k < in.beta.size(); ++k) {
        CHECK(relerr(ll.hessian(j, k), (lu.gradient[k] - ld.gradient[k]) / (2 * h)) < 1e-5);
      }
    }
  }
}

TEST_CASE("eta form matches the coefficient form") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(rng, 25, 3, trial % 2 == 0);
    const auto index = RiskSetIndex::build(in.y);
    std::vector<double> eta(25);
    for (std::size_t i = 0; i < 25; ++i) eta[i] = kernels::dot(in.x.row(i), in.beta);
    const auto e = partial_loglik_eta(eta, index);
    const auto b = partial_loglik(in.beta, in.x, index);
    CHECK(e.value == doctest::Approx(b.value).epsilon(1e-12));
    // chain rule: d/d beta = X^T d/d eta
    for (std::size_t j = 0; j < 3; ++j) {
      double g = 0;
      for (std::size_t i = 0; i < 25; ++i) g += in.x(i, j) * e.gradient[i];
      CHECK(g == doctest::Approx(b.gradient[j]).epsilon(1e-10));
    }
  }
}

TEST_CASE("fit recovers known coefficients") {
  synth::GeneratorSpec spec;
  spec.n = 5000;
  spec.beta = {0.5, -0.5, 0.0};
  spec.rate = 0.1;
  spec.seed = 17;
  auto data = synth::generate(spec);
  auto fit = fit_cox(data.design, data.outcome);
  const auto se = fit.standard_errors();
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(fit.beta[j] - spec.beta[j]) < 3 * se[j]);
  for (std::size_t k = 1; k < fit.loglik_path.size(); ++k) CHECK(fit.loglik_path[k] >= fit.loglik_path[k - 1] - 1e-9);
  CHECK(fit.gradient_norm < 1e-7);
  CHECK(fit.iterations > 0);
  // covariance symmetric with positive diagonal
  for (std::size_t a = 0; a < 3; ++a) {
    CHECK(fit.covariance(a, a) > 0);
    for (std::size_t b = 0; b < 3; ++b) CHECK(fit.covariance(a, b) == doctest::Approx(fit.covariance(b, a)));
  }
}

TEST_CASE("estimates tighten as n grows") {
  double err[2];
  int k = 0;
  for (std::size_t n : {500u, 5000u}) {
    double total = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      synth::GeneratorSpec spec;
      spec.n = n;
      spec.beta = {0.5, -0.5};
      spec.seed = 100 + seed;
      auto d = synth::generate(spec);
      auto fit = fit_cox(d.design, d.outcome);
      total += std::abs(fit.beta[0] - 0.5) + std::abs(fit.beta[1] + 0.5);
    }
    err[k++] = total;
  }
  CHECK(err[1] < err[0]);
}

TEST_CASE("degenerate designs") {
  Rng rng(1);
  auto in = random_instance(rng, 60, 2, false);
  Matrix x(60, 3);
  for (std::size_t i = 0; i < 60; ++i) {
    x(i, 0) = in.x(i, 0);
    x(i, 1) = 1.0;  // constant
    x(i, 2) = in.x(i, 1);
  }
  try {
    fit_cox(x, in.y);
    FAIL("expected a singularity error");
  } catch (const Error& e) {
    CHECK(std::string(e.code()) == "singular");
    CHECK(std::string(e.what()).find("separation/singularity") != std::string::npos);
  }

  // duplicated column: collinear but informative, resolved by ridge
  Matrix dup(60, 2);
  for (std::size_t i = 0; i < 60; ++i) dup(i, 0) = dup(i, 1) = in.x(i, 0);
  auto fit = fit_cox(dup, in.y);
  CHECK(fit.ridge_used > 0.0);
  CHECK(fit.beta[0] == doctest::Approx(fit.beta[1]));
}

TEST_CASE("antitone covariate gives a negative coefficient") {
  Matrix x(8, 1);
  OutcomeColumn y;
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = i + 0.3 * ((i * 5) % 3);
    y.duration.push_back(1.0 + i + 0.5 * ((i * 7) % 2));
    y.event.push_back(1);
  }
  // swap two neighbours so the likelihood has a finite optimum
  std::swap(y.duration[3], y.duration[4]);
  std::swap(y.duration[1], y.duration[2]);
  auto fit = fit_cox(x, y);
  CHECK(fit.beta[0] < 0);
}

TEST_CASE("non-convergence carries the last iterate") {
  Rng rng(3);
  auto in = random_instance(rng, 50, 2, false);
  FitOptions opts;
  opts.max_iter = 1;
  opts.tol = 1e-30;
  try {
    fit_cox(in.x, in.y, opts);
    FAIL("expected non-convergence");
  } catch (const ConvergenceError& e) {
    CHECK(e.last_beta().size() == 2);
  }
}

TEST_CASE("breslow baseline") {
  const std::size_t n = 5;
  OutcomeColumn y;
  for (std::size_t i = 0; i < n; ++i) {
    y.duration.push_back(1.0 + i);
    y.event.push_back(1);
  }
  std::vector<double> eta(n, 0.0);
  auto h = breslow_cumhaz(eta, y);
  CHECK(h(0.0) == 0.0);
  CHECK(h(0.999) == 0.0);
  CHECK(h(1.0) == doctest::Approx(1.0 / 5));  // right-continuous
  CHECK(h(2.5) == doctest::Approx(1.0 / 5 + 1.0 / 4));
  CHECK(h(100) == doctest::Approx(1.0 / 5 + 1.0 / 4 + 1.0 / 3 + 1.0 / 2 + 1.0));

  // exponential data, beta = 0: H0(t) ~ lambda t at the median time
  synth::GeneratorSpec spec;
  spec.n = 10000;
  spec.beta = {0.0};
  spec.rate = 0.1;
  spec.admin_time = 30.0;
  spec.seed = 5;
  auto d = synth::generate(spec);
  std::vector<double> zeros(spec.n, 0.0);
  auto est = breslow_cumhaz(zeros, d.outcome);
  const double median = std::log(2.0) / spec.rate;
  CHECK(std::abs(est(median) - spec.rate * median) < 0.1 * spec.rate * median);
}

TEST_CASE("risk prediction") {
  StepFunction zero;
  CHECK(risk_from_cumhaz(zero, 10.0, 3.0, 10.0).risk == 0.0);
  StepFunction h{{1.0, 5.0}, {0.01, 0.05}};
  double last = -1;
  for (double eta = -5; eta <= 8; eta += 0.5) {
    const double r = risk_from_cumhaz(h, 6.0, eta, 10.0).risk;
    CHECK(r >= last);
    CHECK(r <= 1.0);
    last = r;
  }
  CHECK(risk_from_cumhaz(h, 6.0, 50.0, 10.0).risk == doctest::Approx(1.0));
  CHECK(risk_from_cumhaz(h, 6.0, 0.0, 10.0).extrapolated);
  CHECK_FALSE(risk_from_cumhaz(h, 12.0, 0.0, 10.0).extrapolated);
  CHECK(risk_from_cumhaz(h, 6.0, 0.0, 2.0).risk <= risk_from_cumhaz(h, 6.0, 0.0, 7.0).risk);
}

TEST_CASE("shifting a covariate leaves the other coefficients and the ranking alone") {
  synth::GeneratorSpec spec;
  spec.n = 800;
  spec.beta = {0.7, -0.3};
  spec.seed = 12;
  auto d = synth::generate(spec);
  auto base = fit_cox(d.design, d.outcome);
  auto shifted = d.design;
  for (std::size_t i = 0; i < spec.n; ++i) shifted.values(i, 0) += 3.0;
  auto fit = fit_cox(shifted, d.outcome);
  CHECK(std::abs(fit.beta[1] - base.beta[1]) < 1e-6);
  CHECK(std::abs(fit.beta[0] - base.beta[0]) < 1e-6);
  // same ordering of x beta
  for (std::size_t i = 1; i < spec.n; ++i) {
    const bool a = base.linear_predictor(d.design.values.row(i)) > base.linear_predictor(d.design.values.row(i - 1));
    const bool b = fit.linear_predictor(shifted.values.row(i)) > fit.linear_predictor(shifted.values.row(i - 1));
    CHECK(a == b);
  }
}

TEST_CASE("wald summary") {
  auto null = summary_row("x", 0.0, 1.0);
  CHECK(null.p_value == doctest::Approx(1.0));
  CHECK(null.ci_low == doctest::Approx(-1.959964));
  CHECK(null.ci_high == doctest::Approx(1.959964));
  auto edge = summary_row("x", 1.959964, 1.0);
  CHECK(std::abs(edge.p_value - 0.05) < 1e-6);
  CHECK(edge.hr == std::exp(1.959964));
  auto huge = summary_row("x", 100.0, 1.0);
  CHECK(std::isfinite(huge.neg_log2_p));
  CHECK(huge.neg_log2_p >= 1022.0);

  std::vector<SummaryRow> rows{summary_row("Diagnosis of atrial fibrillation and flutter (I48)", 0.716, 0.0316)};
  const auto csv = summary_csv(rows);
  CHECK(csv.rfind("covariate,log(HR),CI log(HR) lower 95%,CI log(HR) upper 95%,-log2(p-value)\n", 0) == 0);
  CHECK(csv.find("Diagnosis of atrial fibrillation and flutter (I48),0.716,0.654,0.778,") != std::string::npos);
  CHECK(render_summary(rows).find("0.716\t0.654\t0.778\t") != std::string::npos);
}

TEST_CASE("summary rows are sorted and the fit round-trips") {
  synth::GeneratorSpec spec;
  spec.n = 600;
  spec.beta = {-0.4, 0.9, 0.1};
  spec.seed = 2;
  auto d = synth::generate(spec);
  auto fit = fit_cox(d.design, d.outcome);
  auto rows = summarize(fit);
  for (std::size_t k = 1; k < rows.size(); ++k) CHECK(rows[k - 1].log_hr >= rows[k].log_hr);
  CHECK(rows[0].covariate == "x1");

  auto back = cox_fit_from_json(nlohmann::json::parse(to_json(fit).dump()));
  CHECK(back.beta == fit.beta);
  CHECK(back.baseline_cumhaz.values == fit.baseline_cumhaz.values);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(predict_risk(back, d.design.values.row(i)).risk == predict_risk(fit, d.design.values.row(i)).risk);
  }
}
