#pragma once

// Cox proportional-hazards model: partial likelihood (Efron or Breslow ties),
// Newton fitting with step-halving, Breslow baseline hazard, risk prediction
// and Wald inference.

#include <nlohmann/json_fwd.hpp>
#include <span>
#include <string>
#include <vector>

#include "survwright/cohort.hpp"
#include "survwright/error.hpp"
#include "survwright/matrix.hpp"

namespace survwright::cox {

using cohort::OutcomeColumn;

enum class Ties { efron, breslow };

// Subjects grouped by tied duration, groups ordered by decreasing time.
// Built once per outcome and reused across likelihood evaluations.
struct RiskSetIndex {
  struct Group {
    std::size_t begin = 0;  // into `order`
    std::size_t end = 0;
    std::size_t deaths = 0;
    double time = 0.0;
  };
  std::vector<std::size_t> order;  // deaths first inside each group
  std::vector<Group> groups;
  std::size_t total_events = 0;

  static RiskSetIndex build(const OutcomeColumn& outcome);
};

struct LogLik {
  double value = 0.0;
  std::vector<double> gradient;  // d value / d beta
  Matrix hessian;                // d^2 value / d beta^2 (negative semidefinite)
};

// Log partial likelihood of `beta` for design rows `x`. Throws
// Error("no_events") when nothing is observed.
LogLik partial_loglik(std::span<const double> beta, const Matrix& x, const OutcomeColumn& outcome,
                      Ties ties = Ties::efron, bool with_hessian = true);
LogLik partial_loglik(std::span<const double> beta, const Matrix& x, const RiskSetIndex& index,
                      Ties ties = Ties::efron, bool with_hessian = true);

struct EtaLogLik {
  double value = 0.0;
  std::vector<double> gradient;  // d value / d eta, one entry per subject
};

// Same likelihood as a function of the per-subject linear predictor. Used by
// the neural model, where eta is the network output.
EtaLogLik partial_loglik_eta(std::span<const double> eta, const RiskSetIndex& index,
                             Ties ties = Ties::efron);

// Right-continuous step function starting at 0.
struct StepFunction {
  std::vector<double> times;   // strictly increasing
  std::vector<double> values;  // value from times[i] (inclusive) onward

  double operator()(double t) const;
};

StepFunction breslow_cumhaz(std::span<const double> eta, const OutcomeColumn& outcome);

struct FitOptions {
  int max_iter = 100;
  double tol = 1e-7;
  double ridge = 0.0;
  Ties ties = Ties::efron;
};

struct CoxFit {
  std::vector<double> beta;
  Matrix covariance;
  StepFunction baseline_cumhaz;
  std::vector<std::string> column_names;
  double max_time = 0.0;  // longest training follow-up
  int iterations = 0;
  double gradient_norm = 0.0;
  double loglik = 0.0;
  std::vector<double> loglik_path;  // one entry per accepted iterate
  double ridge_used = 0.0;          // options.ridge plus any escalation
  Ties ties = Ties::efron;

  double linear_predictor(std::span<const double> x) const;
  std::vector<double> standard_errors() const;
};

// Thrown when Newton iteration does not meet the tolerance; carries the last
// iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, std::vector<double> last_beta)
      : Error("non_convergence", message), last_beta_(std::move(last_beta)) {}
  const std::vector<double>& last_beta() const { return last_beta_; }

 private:
  std::vector<double> last_beta_;
};

// Maximizes the (optionally ridge-penalized) log partial likelihood. A
// singular information matrix is retried with ridge 1e-8 .. 1e-4; columns that
// carry no information at all raise Error("singular").
CoxFit fit_cox(const Matrix& x, const OutcomeColumn& outcome, const FitOptions& options = {},
               std::vector<std::string> column_names = {});
CoxFit fit_cox(const cohort::DesignMatrix& design, const OutcomeColumn& outcome,
               const FitOptions& options = {});

inline constexpr double kDefaultHorizon = 10.0;

struct RiskPrediction {
  double risk = 0.0;
  bool extrapolated = false;
};

// 1 - exp(-H0(horizon) exp(eta)). Horizons past `max_time` use the last H0
// value and set `extrapolated`.
RiskPrediction risk_from_cumhaz(const StepFunction& cumhaz, double max_time, double eta, double horizon);
RiskPrediction predict_risk(const CoxFit& fit, std::span<const double> x, double horizon = kDefaultHorizon);

inline constexpr double kZ975 = 1.959964;

struct SummaryRow {
  std::string covariate;
  double log_hr = 0.0;
  double hr = 1.0;
  double se = 0.0;
  double z = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  double neg_log2_p = 0.0;
};

SummaryRow summary_row(std::string covariate, double log_hr, double se);
// Rows sorted by log(HR), largest first.
std::vector<SummaryRow> summarize(const CoxFit& fit);
// covariate, log(HR), CI low, CI high, -log2(p)
std::string summary_csv(std::span<const SummaryRow> rows);
nlohmann::json summary_json(std::span<const SummaryRow> rows);
std::string render_summary(std::span<const SummaryRow> rows);

nlohmann::json to_json(const CoxFit& fit);
CoxFit cox_fit_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const StepFunction& f);
StepFunction step_function_from_json(const nlohmann::json& doc);

}  // namespace survwright::cox
