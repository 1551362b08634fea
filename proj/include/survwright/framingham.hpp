#pragma once

// Framingham general-CVD 10-year risk as a comparison baseline: input
// derivation from a raw cohort, the published sex-specific formula, a 7-term
// Cox refit, and c-index comparison tables.

#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "survwright/cohort.hpp"
#include "survwright/cox.hpp"

namespace survwright::framingham {

using cohort::OutcomeColumn;

inline constexpr double kMgPerDlPerMmolPerL = 38.67;
inline double mmol_to_mg_dl(double mmol_per_l) { return mmol_per_l * kMgPerDlPerMmolPerL; }

struct FraminghamInput {
  bool female = false;
  double age = 0.0;
  double total_cholesterol = 0.0;  // mg/dL
  double hdl_cholesterol = 0.0;    // mg/dL
  double sbp = 0.0;                // mmHg
  bool sbp_treated = false;
  bool current_smoker = false;
  bool diabetes = false;
};

struct SexCoefficients {
  double ln_age = 0.0;
  double ln_total_cholesterol = 0.0;
  double ln_hdl_cholesterol = 0.0;
  double ln_sbp_untreated = 0.0;
  double ln_sbp_treated = 0.0;
  double current_smoker = 0.0;
  double diabetes = 0.0;
  double baseline_survival_10y = 0.0;
  double mean_linear_predictor = 0.0;
};

struct CoefficientSet {
  std::string provenance;
  SexCoefficients female;
  SexCoefficients male;

  const SexCoefficients& for_sex(bool is_female) const { return is_female ? female : male; }
  // Error("coefficients") when a baseline survival is outside (0, 1) or a
  // value is non-finite.
  void validate() const;
};

nlohmann::json to_json(const CoefficientSet& c);
// Error("coefficients", "missing sex block: female") and similar.
CoefficientSet coefficients_from_json(const nlohmann::json& doc);
CoefficientSet load_coefficients(const std::filesystem::path& path);

double linear_predictor(const FraminghamInput& in, const CoefficientSet& c);
// 1 - S0(10)^exp(L - mean L). Error("domain") naming the field when a log
// term gets a nonpositive value.
double framingham_risk(const FraminghamInput& in, const CoefficientSet& c);

// Raw column names used for derivation.
struct FieldMap {
  std::string sex = "sex";  // binary, 1 = female
  std::string age = "age";
  std::string total_cholesterol = "total_cholesterol";
  std::string hdl_cholesterol = "hdl_cholesterol";
  bool cholesterol_in_mmol = true;
  std::vector<std::string> sbp{"sbp_1", "sbp_2"};  // averaged
  std::string bp_medication = "bp_medication";
  std::string smoking = "smoking_status";  // labelled column, or binary flag
  std::string current_smoker_label = "current";
  std::string diabetes = "diabetes";
  std::string diabetes_date = "diabetes_date";      // optional outcome field
  std::string assessment_date = "assessment_date";  // optional outcome field
};

struct DerivedInputs {
  std::vector<FraminghamInput> inputs;
  std::vector<std::size_t> rows;  // raw row of each input
  std::vector<std::pair<std::size_t, std::string>> excluded;  // row, reason
};

// Rows with a missing required value are excluded with a reason. Diabetes
// diagnosed after the assessment date does not count.
DerivedInputs derive_framingham_inputs(const cohort::RawCohort& raw, const FieldMap& fields = {});

std::vector<double> framingham_risks(const std::vector<FraminghamInput>& inputs, const CoefficientSet& c);

// ln age, ln TC, ln HDL, ln SBP (untreated), ln SBP (treated), smoker, diabetes.
Matrix refit_design(const std::vector<FraminghamInput>& inputs);
std::vector<std::string> refit_columns();

struct RefitResult {
  cox::CoxFit female;
  cox::CoxFit male;
  std::vector<double> risks;  // 10-year risk, sex-specific fit, input order
};
// One Cox model per sex on the seven Framingham terms.
RefitResult refit_cox(const std::vector<FraminghamInput>& inputs, const OutcomeColumn& outcome,
                      double horizon = cox::kDefaultHorizon);

struct ComparisonRow {
  std::string score;
  std::string scope;  // female, male, all
  double cindex = 0.0;
  std::size_t n = 0;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
};

struct NamedScore {
  std::string name;
  std::vector<double> risk;
};

// c-index of each score per sex and pooled (the pooled vector is the
// sex-specific scores concatenated).
ComparisonReport compare_scores(const std::vector<NamedScore>& scores, const std::vector<bool>& female,
                                const OutcomeColumn& outcome);
nlohmann::json to_json(const ComparisonReport& r);
// Rows are scores; columns female, male, all.
std::string render_comparison(const ComparisonReport& r);

}  // namespace survwright::framingham
