#pragma once

// Cohort ingestion and preprocessing: schema, CSV loading, derived features,
// imputation, encoding into a design matrix, rare-column pruning, survival
// outcome construction, stratified splitting and cohort summaries.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "survwright/matrix.hpp"

namespace survwright::cohort {

enum class FeatureKind { continuous, binary, categorical, ordinal, derived };
enum class Derivation { none, ratio, sum };

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  std::vector<std::string> categories;  // categorical/ordinal levels, in order
  Derivation derivation = Derivation::none;
  std::vector<std::string> inputs;  // derived features only
  std::string unit;
  std::string label;
  // Free-form tags; the pipeline understands "sex", "cholesterol", "sbp",
  // "heart_rate" and "modifiable".
  std::vector<std::string> tags;
  // false keeps the column available (derivations, Framingham inputs) but
  // out of the design matrix.
  bool model_input = true;

  bool has_tag(std::string_view tag) const;
  bool is_labelled() const {
    return kind == FeatureKind::categorical || kind == FeatureKind::ordinal;
  }
};

struct PriorDiagnosisRule {
  std::string name;
  std::vector<std::string> date_columns;
};

// Either explicit duration/event columns or the date form (event dates,
// assessment date, optional death date, administrative censor date).
struct OutcomeSpec {
  std::string duration_column;
  std::string event_column;
  std::vector<std::string> event_date_columns;
  std::string assessment_date_column;
  std::string death_date_column;
  std::int64_t admin_censor_day = 0;

  bool uses_dates() const { return !event_date_columns.empty(); }
  std::vector<std::string> columns() const;
};

struct CohortSchema {
  int schema_version = 1;
  std::string id_column = "id";
  std::vector<FeatureSpec> features;
  OutcomeSpec outcome;
  std::vector<PriorDiagnosisRule> exclusion_rules;
  // Extra date columns kept alongside the outcome (e.g. a diagnosis date
  // that must be censored to the assessment day).
  std::vector<std::string> date_columns;

  const FeatureSpec* find(std::string_view name) const;
  const FeatureSpec& at(std::string_view name) const;
  FeatureSpec& at(std::string_view name);
  // Throws Error("schema") on any invariant violation.
  void validate() const;
  // Name of the feature tagged "sex" (binary, 1 = female), if any.
  std::optional<std::string> sex_feature() const;
};

inline constexpr int kSchemaVersion = 1;

nlohmann::json to_json(const CohortSchema& schema);
CohortSchema schema_from_json(const nlohmann::json& doc);
CohortSchema load_schema(const std::filesystem::path& path);

struct RawColumn {
  FeatureKind kind = FeatureKind::continuous;
  std::vector<std::optional<double>> numbers;      // continuous, binary, derived
  std::vector<std::optional<std::string>> labels;  // categorical, ordinal

  bool is_labelled() const {
    return kind == FeatureKind::categorical || kind == FeatureKind::ordinal;
  }
  std::size_t size() const { return is_labelled() ? labels.size() : numbers.size(); }
  bool missing(std::size_t row) const {
    return is_labelled() ? !labels[row].has_value() : !numbers[row].has_value();
  }
  std::size_t missing_count() const;
};

struct RawCohort {
  std::vector<std::string> row_ids;
  std::map<std::string, RawColumn> columns;
  // Outcome and date fields (days since 1970-01-01 for dates).
  std::map<std::string, std::vector<std::optional<double>>> outcome_fields;

  std::size_t size() const { return row_ids.size(); }
  std::size_t missing_count() const;
  RawCohort select_rows(std::span<const std::size_t> rows) const;
};

struct QualityReport {
  std::size_t rows_loaded = 0;
  std::map<std::string, std::size_t> missing;
  std::map<std::string, std::size_t> zero_denominator;
  std::vector<std::string> dropped_rare;
  std::vector<std::string> excluded_subjects;
};
nlohmann::json to_json(const QualityReport& report);

// Days since 1970-01-01 from "YYYY-MM-DD" or a plain integer.
std::optional<std::int64_t> parse_day(std::string_view text);
std::string format_day(std::int64_t day);

// Missing cells are the empty string or "NA". Every CSV column must be known
// to the schema and every non-derived schema column must be present.
RawCohort load_cohort(std::istream& csv, const CohortSchema& schema);
RawCohort load_cohort(const std::filesystem::path& path, const CohortSchema& schema);

// Writes every raw column (derived columns included when present) plus the
// outcome fields. Numbers are written with round-trip precision.
void write_cohort(std::ostream& out, const RawCohort& raw, const CohortSchema& schema);

// Adds derived columns. A derived value is missing when any input is missing
// or when a ratio denominator is zero (counted in `report`).
RawCohort derive_features(const RawCohort& raw, const CohortSchema& schema,
                          QualityReport* report = nullptr);

struct ImputationStats {
  std::map<std::string, double> numeric_fill;      // mean (continuous/derived), mode (binary)
  std::map<std::string, std::string> label_fill;  // mode
};
nlohmann::json to_json(const ImputationStats& stats);
ImputationStats imputation_from_json(const nlohmann::json& doc);

ImputationStats fit_imputation(const RawCohort& stats_source, const CohortSchema& schema);
RawCohort apply_imputation(const RawCohort& raw, const ImputationStats& stats);
RawCohort impute_mean(const RawCohort& raw, const RawCohort& stats_source,
                      const CohortSchema& schema);

enum class Encoding { z_scaled, one_hot, binary };

struct ColumnMeta {
  std::string feature;
  Encoding encoding = Encoding::z_scaled;
  std::string level;  // one-hot only
  double mean = 0.0;  // z-scaled only (population sd)
  double sd = 1.0;
};

struct DesignMatrix {
  Matrix values;
  std::vector<std::string> names;
  std::vector<ColumnMeta> meta;

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  DesignMatrix select_rows(std::span<const std::size_t> rows) const;
  // Throws Error("schema") naming the first unknown column.
  DesignMatrix select_columns(std::span<const std::string> keep) const;
};

struct ScaleStats {
  double mean = 0.0;
  double sd = 1.0;
};

struct EncodingStats {
  std::map<std::string, ScaleStats> scaling;
};
nlohmann::json to_json(const EncodingStats& stats);
EncodingStats encoding_from_json(const nlohmann::json& doc);

EncodingStats fit_encoding(const RawCohort& raw, const CohortSchema& schema);

enum class UnseenLevel { strict, lenient };

// Expects no missing values in model-input columns. Categorical/ordinal
// features expand to one column per schema level ("name=level"); continuous
// and derived features are z-scored with `fit_stats` (or their own
// statistics when absent); binary features pass through.
DesignMatrix encode(const RawCohort& raw, const CohortSchema& schema,
                    const EncodingStats* fit_stats = nullptr,
                    UnseenLevel policy = UnseenLevel::strict);

inline constexpr double kDefaultMinPrevalence = 0.002;

// Drops binary/one-hot columns whose share of ones is strictly below
// `min_prevalence`. Continuous columns are never touched.
DesignMatrix prune_rare(const DesignMatrix& design, double min_prevalence = kDefaultMinPrevalence,
                        std::vector<std::string>* dropped = nullptr);

struct OutcomeColumn {
  std::vector<double> duration;  // years
  std::vector<std::uint8_t> event;

  std::size_t size() const { return duration.size(); }
  std::size_t event_count() const;
  OutcomeColumn select(std::span<const std::size_t> rows) const;
  void validate() const;
};

inline constexpr double kDaysPerYear = 365.25;

struct SubjectDates {
  std::vector<std::optional<std::int64_t>> event_days;
  std::int64_t assessment_day = 0;
  std::optional<std::int64_t> death_day;
};

struct OutcomeBuild {
  OutcomeColumn outcome;          // kept subjects only
  std::vector<std::size_t> kept;  // indices into the input
  std::vector<std::size_t> excluded;
};

// Duration runs from assessment to the earliest of (event after assessment,
// death, administrative censor). Subjects with an event on or before their
// assessment day are excluded.
OutcomeBuild build_outcome(std::span<const SubjectDates> subjects, std::int64_t admin_censor_day);

// Outcome for a loaded cohort in either schema form. Subjects excluded by
// prior diagnoses are dropped from `kept`; their ids go to `report`.
OutcomeBuild extract_outcome(const RawCohort& raw, const CohortSchema& schema,
                             QualityReport* report = nullptr);

struct Split {
  std::vector<std::size_t> first;   // the `fraction` share
  std::vector<std::size_t> second;  // the remainder
};

// Stratified on the event flag; both parts sorted ascending.
Split stratified_split(const OutcomeColumn& outcome, double fraction, std::uint64_t seed);

struct SummaryRow {
  std::string label;
  bool continuous = false;
  // Per group (all, no event, event): count and percent, or median [Q1,Q3].
  std::vector<double> count;
  std::vector<double> percent;
  std::vector<double> median, q1, q3;
  std::optional<double> p_value;
  std::string test;  // "chi-squared" or "kruskal-wallis"
};

struct CohortSummary {
  std::vector<double> group_sizes;  // all, no event, event
  std::vector<SummaryRow> rows;
};
nlohmann::json to_json(const CohortSummary& summary);
std::string render_table(const CohortSummary& summary);

// Groups by the event flag. Binary and labelled features report counts with a
// chi-squared test; continuous ones report quartiles with Kruskal-Wallis.
CohortSummary summarize_cohort(const RawCohort& raw, const CohortSchema& schema,
                               const OutcomeColumn& outcome);

// Everything needed to turn raw records into model inputs, frozen from the
// training split so training and serving share one transform.
struct Preprocessor {
  CohortSchema schema;
  ImputationStats imputation;
  EncodingStats encoding;
  std::vector<std::string> columns;
  std::vector<std::string> dropped_rare;

  static Preprocessor fit(const RawCohort& train_raw, const CohortSchema& schema,
                          double min_prevalence = kDefaultMinPrevalence);
  DesignMatrix transform(const RawCohort& raw, UnseenLevel policy = UnseenLevel::strict) const;
  // Keep only the listed design columns (feature selection, variants).
  void restrict_columns(std::span<const std::string> keep);
  // Raw feature names that must be supplied to compute `columns`.
  std::vector<std::string> required_features() const;
};
nlohmann::json to_json(const Preprocessor& pre);
Preprocessor preprocessor_from_json(const nlohmann::json& doc);

enum class Variant { full, digital };
enum class SexScope { all, male, female };
std::string_view to_string(Variant v);
std::string_view to_string(SexScope s);
Variant parse_variant(std::string_view text);
SexScope parse_sex_scope(std::string_view text);

// full: heart rate is not a model input. digital: cholesterol- and
// SBP-tagged features are removed and the heart-rate feature is enabled.
CohortSchema apply_variant(CohortSchema schema, Variant variant);
// Throws Error("variant") when a digital design would contain an excluded
// column or lacks heart rate.
void check_variant(const CohortSchema& schema, std::span<const std::string> columns,
                   Variant variant);

// Rows matching the scope (all rows for SexScope::all); the sex feature is
// removed from model inputs when a single sex is selected.
std::vector<std::size_t> rows_for_sex(const RawCohort& raw, const CohortSchema& schema,
                                      SexScope scope);
CohortSchema apply_sex_scope(CohortSchema schema, SexScope scope);

}  // namespace survwright::cohort
