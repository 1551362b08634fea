#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <limits>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "survwright/cox.hpp"
#include "survwright/csv.hpp"
#include "survwright/kernels.hpp"
#include "survwright/stats.hpp"

namespace survwright::cox {

using nlohmann::json;

namespace {

constexpr double kRidgeLadder[] = {0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4};

// Penalized objective l(beta) - ridge/2 |beta|^2 and its derivatives.
LogLik objective(std::span<const double> beta, const Matrix& x, const RiskSetIndex& index, Ties ties,
                 double ridge, bool with_hessian) {
  LogLik ll = partial_loglik(beta, x, index, ties, with_hessian);
  if (ridge > 0.0) {
    ll.value -= 0.5 * ridge * kernels::dot(beta, beta);
    kernels::axpy(-ridge, beta, ll.gradient);
    if (with_hessian) {
      for (std::size_t a = 0; a < beta.size(); ++a) ll.hessian(a, a) -= ridge;
    }
  }
  return ll;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

std::string column_label(const std::vector<std::string>& names, std::size_t j) {
  return j < names.size() ? names[j] : fmt::format("x{}", j);
}

}  // namespace

double CoxFit::linear_predictor(std::span<const double> x) const { return kernels::dot(x, beta); }

std::vector<double> CoxFit::standard_errors() const {
  std::vector<double> se(beta.size());
  for (std::size_t j = 0; j < beta.size(); ++j) se[j] = std::sqrt(std::max(covariance(j, j), 0.0));
  return se;
}

CoxFit fit_cox(const Matrix& x, const OutcomeColumn& outcome, const FitOptions& options,
               std::vector<std::string> column_names) {
  if (x.rows() != outcome.size()) throw Error("dimension", "design and outcome row counts differ");
  const std::size_t p = x.cols();
  const auto index = RiskSetIndex::build(outcome);
  if (index.total_events == 0) throw Error("no_events", "no events");

  CoxFit fit;
  fit.ties = options.ties;
  fit.column_names = std::move(column_names);
  fit.beta.assign(p, 0.0);
  fit.max_time = *std::max_element(outcome.duration.begin(), outcome.duration.end());

  double extra_ridge = 0.0;
  auto ll = objective(fit.beta, x, index, options.ties, options.ridge, true);
  fit.loglik_path.push_back(ll.value);
  bool converged = false;

  auto information_factor = [&](const LogLik& current) {
    Matrix info(p, p);
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = 0; b < p; ++b) info(a, b) = -current.hessian(a, b);
    }
    for (double r : kRidgeLadder) {
      if (r < extra_ridge) continue;
      Matrix shifted = info;
      for (std::size_t a = 0; a < p; ++a) shifted(a, a) += r;
      auto chol = Cholesky::factor(shifted, 1e-12);
      if (chol.ok) {
        if (r > extra_ridge) {
          spdlog::info("cox: information matrix singular, ridge escalated to {:g}", r);
          extra_ridge = r;
        }
        return chol;
      }
      spdlog::debug("cox: factorization failed at ridge {:g}", r);
    }
    throw Error("singular", "separation/singularity: information matrix singular after ridge escalation to 1e-4");
  };

  for (int iter = 0; iter < options.max_iter; ++iter) {
    // The escalated ridge is part of the objective once introduced.
    std::vector<double> grad = ll.gradient;
    if (extra_ridge > 0.0) kernels::axpy(-extra_ridge, fit.beta, grad);
    fit.gradient_norm = max_abs(grad);
    if (fit.gradient_norm < options.tol) {
      converged = true;
      break;
    }
    const auto chol = information_factor(ll);
    const auto step = chol.solve(grad);

    const double penalty = options.ridge + extra_ridge;
    const double current = ll.value - (extra_ridge > 0.0 ? 0.5 * extra_ridge * kernels::dot(fit.beta, fit.beta) : 0.0);
    const double slack = 1e-12 * std::max(1.0, std::abs(current));
    double t = 1.0;
    bool accepted = false;
    std::vector<double> candidate(p);
    LogLik trial;
    for (int halving = 0; halving < 50; ++halving, t *= 0.5) {
      for (std::size_t j = 0; j < p; ++j) candidate[j] = fit.beta[j] + t * step[j];
      trial = objective(candidate, x, index, options.ties, penalty, true);
      if (std::isfinite(trial.value) && trial.value >= current - slack) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw ConvergenceError(
          fmt::format("step-halving failed at iteration {} (gradient max-norm {:.3g})", iter, fit.gradient_norm),
          fit.beta);
    }
    fit.beta = candidate;
    // Keep `ll` as the objective with the user ridge only; the escalated
    // part is re-applied above.
    ll = trial;
    if (extra_ridge > 0.0) {
      ll.value += 0.5 * extra_ridge * kernels::dot(fit.beta, fit.beta);
      kernels::axpy(extra_ridge, fit.beta, ll.gradient);
      for (std::size_t a = 0; a < p; ++a) ll.hessian(a, a) += extra_ridge;
    }
    fit.iterations = iter + 1;
    fit.loglik_path.push_back(trial.value);
  }
  if (!converged) {
    throw ConvergenceError(fmt::format("no convergence after {} iterations (gradient max-norm {:.3g}); last beta {}",
                                       options.max_iter, fit.gradient_norm, fit.beta),
                           fit.beta);
  }

  // Final information (including the penalty in use) and the zero-information
  // check that ridge cannot repair.
  fit.ridge_used = options.ridge + extra_ridge;
  Matrix info(p, p);
  double max_diag = 0.0;
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < p; ++b) info(a, b) = -ll.hessian(a, b);
    max_diag = std::max(max_diag, info(a, a) + options.ridge);
  }
  for (std::size_t a = 0; a < p; ++a) {
    if (info(a, a) + options.ridge <= 1e-10 * std::max(max_diag, 1e-300)) {
      throw Error("singular", "separation/singularity: column '" + column_label(fit.column_names, a) +
                                  "' carries no information (constant within risk sets)");
    }
    info(a, a) += extra_ridge;
  }
  auto chol = Cholesky::factor(info, 1e-14);
  if (!chol.ok) throw Error("singular", "separation/singularity: information matrix not invertible at optimum");
  fit.covariance = chol.inverse();
  fit.loglik = partial_loglik(fit.beta, x, index, options.ties, false).value;

  std::vector<double> eta(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) eta[i] = kernels::dot(x.row(i), fit.beta);
  fit.baseline_cumhaz = breslow_cumhaz(eta, outcome);
  return fit;
}

CoxFit fit_cox(const cohort::DesignMatrix& design, const OutcomeColumn& outcome, const FitOptions& options) {
  return fit_cox(design.values, outcome, options, design.names);
}

RiskPrediction risk_from_cumhaz(const StepFunction& cumhaz, double max_time, double eta, double horizon) {
  RiskPrediction out;
  out.extrapolated = horizon > max_time;
  const double h0 = cumhaz(horizon);
  out.risk = -std::expm1(-h0 * std::exp(eta));
  if (!(out.risk >= 0.0)) out.risk = 0.0;  // h0 = 0 with exp overflow gives NaN
  out.risk = std::min(out.risk, 1.0);
  return out;
}

RiskPrediction predict_risk(const CoxFit& fit, std::span<const double> x, double horizon) {
  if (x.size() != fit.beta.size()) throw Error("dimension", "predictor length does not match the fit");
  return risk_from_cumhaz(fit.baseline_cumhaz, fit.max_time, fit.linear_predictor(x), horizon);
}

SummaryRow summary_row(std::string covariate, double log_hr, double se) {
  SummaryRow r;
  r.covariate = std::move(covariate);
  r.log_hr = log_hr;
  r.hr = std::exp(log_hr);
  r.se = se;
  r.z = se > 0.0 ? log_hr / se : 0.0;
  r.ci_low = log_hr - kZ975 * se;
  r.ci_high = log_hr + kZ975 * se;
  r.p_value = stats::normal_two_sided_p(r.z);
  r.neg_log2_p = -std::log2(std::max(r.p_value, std::numeric_limits<double>::min()));
  return r;
}

std::vector<SummaryRow> summarize(const CoxFit& fit) {
  const auto se = fit.standard_errors();
  std::vector<SummaryRow> rows;
  for (std::size_t j = 0; j < fit.beta.size(); ++j) {
    rows.push_back(summary_row(column_label(fit.column_names, j), fit.beta[j], se[j]));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.log_hr > b.log_hr; });
  return rows;
}

std::string summary_csv(std::span<const SummaryRow> rows) {
  std::string out = "covariate,log(HR),CI log(HR) lower 95%,CI log(HR) upper 95%,-log2(p-value)\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.3f},{:.3f},{:.3f},{:.3f}\n", csv::quote(r.covariate), r.log_hr, r.ci_low, r.ci_high,
                       r.neg_log2_p);
  }
  return out;
}

json summary_json(std::span<const SummaryRow> rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"covariate", r.covariate},
                   {"log_hr", r.log_hr},
                   {"hr", r.hr},
                   {"se", r.se},
                   {"ci_low", r.ci_low},
                   {"ci_high", r.ci_high},
                   {"p_value", r.p_value},
                   {"neg_log2_p", r.neg_log2_p}});
  }
  return out;
}

std::string render_summary(std::span<const SummaryRow> rows) {
  std::string out = "Covariate\tlog(HR)\tCI log(HR) lower 95%\tCI log(HR) upper 95%\t-log2 (p-value)\n";
  for (const auto& r : rows) {
    out += fmt::format("{}\t{:.3f}\t{:.3f}\t{:.3f}\t{:.3f}\n", r.covariate, r.log_hr, r.ci_low, r.ci_high,
                       r.neg_log2_p);
  }
  return out;
}

json to_json(const StepFunction& f) {
  json pairs = json::array();
  for (std::size_t i = 0; i < f.times.size(); ++i) pairs.push_back({f.times[i], f.values[i]});
  return pairs;
}

StepFunction step_function_from_json(const json& doc) {
  StepFunction f;
  for (const auto& pair : doc) {
    f.times.push_back(pair.at(0).get<double>());
    f.values.push_back(pair.at(1).get<double>());
  }
  return f;
}

json to_json(const CoxFit& fit) {
  json cov = json::array();
  for (std::size_t r = 0; r < fit.covariance.rows(); ++r) {
    auto row = fit.covariance.row(r);
    cov.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"model_kind", "cox"},
          {"beta", fit.beta},
          {"covariance", std::move(cov)},
          {"column_names", fit.column_names},
          {"baseline_cumhaz", to_json(fit.baseline_cumhaz)},
          {"max_time", fit.max_time},
          {"ties", fit.ties == Ties::efron ? "efron" : "breslow"},
          {"convergence",
           {{"iterations", fit.iterations}, {"gradient_norm", fit.gradient_norm}, {"ridge", fit.ridge_used}}},
          {"loglik", fit.loglik}};
}

CoxFit cox_fit_from_json(const json& doc) {
  CoxFit fit;
  fit.beta = doc.at("beta").get<std::vector<double>>();
  const auto& cov = doc.at("covariance");
  fit.covariance = Matrix(cov.size(), cov.size());
  for (std::size_t r = 0; r < cov.size(); ++r) {
    for (std::size_t c = 0; c < cov.size(); ++c) fit.covariance(r, c) = cov.at(r).at(c).get<double>();
  }
  fit.column_names = doc.at("column_names").get<std::vector<std::string>>();
  fit.baseline_cumhaz = step_function_from_json(doc.at("baseline_cumhaz"));
  fit.max_time = doc.at("max_time").get<double>();
  fit.ties = doc.value("ties", std::string("efron")) == "breslow" ? Ties::breslow : Ties::efron;
  const auto& conv = doc.at("convergence");
  fit.iterations = conv.at("iterations").get<int>();
  fit.gradient_norm = conv.at("gradient_norm").get<double>();
  fit.ridge_used = conv.at("ridge").get<double>();
  fit.loglik = doc.at("loglik").get<double>();
  if (fit.beta.size() != fit.column_names.size()) throw Error("model", "cox model beta/column count mismatch");
  return fit;
}

}  // namespace survwright::cox
