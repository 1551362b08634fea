#pragma once

// Synthetic survival cohorts with known proportional-hazards ground truth.

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "survwright/cohort.hpp"

namespace survwright::synth {

enum class Baseline { exponential, weibull };

struct GeneratorSpec {
  std::size_t n = 1000;
  std::vector<double> beta;
  Matrix correlation;  // empty: independent standard normal covariates
  Baseline baseline = Baseline::exponential;
  double rate = 0.05;  // exponential hazard per year
  double weibull_shape = 1.5;
  double weibull_scale = 20.0;  // years
  double censor_rate = 0.0;     // independent exponential censoring, 0 = off
  double admin_time = 10.0;     // administrative censoring, <= 0 = off
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const GeneratorSpec& spec);
GeneratorSpec generator_spec_from_json(const nlohmann::json& doc);

// True baseline cumulative hazard H0(t).
double true_cumhaz(const GeneratorSpec& spec, double t);

struct Generated {
  cohort::DesignMatrix design;  // columns x0 .. x{p-1}
  cohort::OutcomeColumn outcome;
  std::vector<double> linear_predictor;  // true x beta
  nlohmann::json truth;
};

// T = H0^{-1}(-ln U / exp(x beta)); duration = min(T, C); event = T <= C.
Generated generate(const GeneratorSpec& spec);

// The generated cohort as an ingestible schema + raw cohort
// (duration/event outcome form, continuous features x0..).
cohort::CohortSchema linear_schema(std::size_t p);
cohort::RawCohort to_raw(const Generated& data);

// Mixed-type cohort shaped like a biobank extract: continuous, binary,
// categorical and ordinal features, ratio and sum derivations, MCAR
// missingness, a rare category level, date-based outcomes with prior-disease
// exclusions. Hazard effects are defined on raw units and recorded in `truth`.
struct CohortTemplate {
  std::size_t n = 5000;
  std::uint64_t seed = 0;
  // Per raw feature MCAR rate; features not listed are complete.
  std::map<std::string, double> missingness = default_missingness();
  std::size_t noise_features = 4;
  double rare_level_prevalence = 0.001;
  double prior_disease_rate = 0.02;
  double baseline_rate = 0.0055;  // CVD hazard per year at the reference profile
  double death_rate = 0.004;
  // Hazard on the log scale per cholesterol-ratio unit and per SBP mmHg;
  // exposed so tests can switch the signal off.
  double cholesterol_effect = 0.18;
  double sbp_effect = 0.018;

  static std::map<std::string, double> default_missingness();
};

struct BiobankCohort {
  cohort::CohortSchema schema;
  cohort::RawCohort raw;
  nlohmann::json truth;
};

BiobankCohort generate_biobank_cohort(const CohortTemplate& tmpl);

}  // namespace survwright::synth
