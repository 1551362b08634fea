#pragma once

// Cohort-to-bundle workflow shared by the CLI and the acceptance harness:
// variant and sex scoping, outcome construction, the 75/25 stratified split,
// preprocessing fitted on the training part, model fitting and held-out
// evaluation.

#include <optional>
#include <string>
#include <vector>

#include "survwright/cohort.hpp"
#include "survwright/eval.hpp"
#include "survwright/search.hpp"
#include "survwright/selection.hpp"
#include "survwright/service.hpp"

namespace survwright::pipeline {

enum class ModelKind { cox, deepsurv };
std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view text);

inline constexpr double kTrainFraction = 0.75;

struct Prepared {
  cohort::CohortSchema schema;  // variant and sex scope applied
  cohort::RawCohort raw;        // subjects kept after scoping and exclusions
  cohort::OutcomeColumn outcome;
  std::vector<std::size_t> train;  // into `raw`
  std::vector<std::size_t> test;
  cohort::QualityReport quality;
};

Prepared prepare(const cohort::RawCohort& raw, const cohort::CohortSchema& schema, cohort::Variant variant,
                 cohort::SexScope scope, std::uint64_t seed);

// Nested split of the training rows: (inner train, validation).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(const Prepared& p, std::uint64_t seed);

struct TrainConfig {
  ModelKind kind = ModelKind::cox;
  cohort::Variant variant = cohort::Variant::full;
  cohort::SexScope scope = cohort::SexScope::all;
  std::uint64_t seed = 0;
  // Design columns to keep (from feature selection); empty keeps all.
  std::vector<std::string> features;
  neural::HyperConfig hyper;
  int search_budget = 0;  // > 0 runs random search instead of `hyper`
  int max_epochs = 512;
  int patience = 10;
  double min_prevalence = cohort::kDefaultMinPrevalence;
  eval::EvalOptions eval;
  std::string id;
  std::string version = "1";
};

struct TrainResult {
  service::ModelBundle bundle;
  eval::EvalReport test_report;
  std::vector<search::TrialRecord> trials;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
};

TrainResult train_bundle(const cohort::RawCohort& raw, const cohort::CohortSchema& schema, const TrainConfig& config);

// Evaluates a bundle on raw rows with the bundle's own preprocessing.
eval::EvalReport evaluate_bundle(const service::ModelBundle& bundle, const cohort::RawCohort& raw,
                                 const cohort::OutcomeColumn& outcome, const eval::EvalOptions& options);

struct SelectionRun {
  selection::SelectionTrace trace;
  double full_test_cindex = 0.0;
  double reduced_test_cindex = 0.0;
};

// Feature selection on the training part (nested validation split for the
// c-index guard), then full vs reduced Cox compared on the test part.
SelectionRun run_selection(const cohort::RawCohort& raw, const cohort::CohortSchema& schema,
                           const selection::SelectionOptions& options, std::uint64_t seed);

}  // namespace survwright::pipeline
