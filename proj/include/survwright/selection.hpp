#pragma once

// Two-stage feature reduction: univariate Cox significance filter, then
// batched backward elimination guarded by validation c-index, then a manual
// exclusion list.

#include <iosfwd>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "survwright/cohort.hpp"

namespace survwright::selection {

using cohort::DesignMatrix;
using cohort::OutcomeColumn;

inline constexpr double kDefaultAlpha = 0.01;
inline constexpr double kDefaultCindexTol = 0.001;

// One tentative removal during backward elimination.
struct EliminationStep {
  std::size_t batch_size = 0;
  std::vector<std::string> candidates;  // weakest by Wald |z|
  double cindex_before = 0.0;
  std::optional<double> cindex_after;  // empty when the refit failed
  bool committed = false;
  std::string note;
};

struct StageRecord {
  std::string stage;  // "univariate", "backward", "exclusion"
  std::vector<std::string> removed;
  std::optional<double> cindex_before;
  std::optional<double> cindex_after;
  std::map<std::string, std::optional<double>> p_values;  // univariate only; empty = degenerate
  std::map<std::string, std::string> reasons;            // per removed feature
  std::vector<EliminationStep> steps;                    // backward only
};

struct SelectionTrace {
  std::vector<std::string> initial;
  std::vector<StageRecord> stages;
  std::vector<std::string> final_features;
};

struct FilterResult {
  std::vector<std::string> retained;
  StageRecord stage;
};

// One single-column Cox fit per feature; drops p > alpha (strictly) and any
// feature whose fit fails ("degenerate").
FilterResult univariate_filter(const DesignMatrix& design, const OutcomeColumn& outcome, double alpha = kDefaultAlpha);

// Removes the weakest features by Wald |z| in batches. A batch is committed
// when the validation c-index falls by less than `tol`; otherwise the batch is
// halved. Stops when a batch of one fails. initial_batch 0 means
// max(1, remaining / 8).
FilterResult backward_eliminate(const DesignMatrix& train, const OutcomeColumn& train_outcome,
                                const DesignMatrix& validation, const OutcomeColumn& validation_outcome,
                                double tol = kDefaultCindexTol, std::size_t initial_batch = 0);

// Unknown names are logged and ignored.
FilterResult apply_exclusion_list(const std::vector<std::string>& features, const std::vector<std::string>& exclusions);

// One name per line; blank lines and '#' comments skipped.
std::vector<std::string> read_exclusion_list(std::istream& in);

struct SelectionOptions {
  double alpha = kDefaultAlpha;
  double cindex_tol = kDefaultCindexTol;
  std::size_t initial_batch = 0;
  std::vector<std::string> exclusions;
};

SelectionTrace select_features(const DesignMatrix& train, const OutcomeColumn& train_outcome,
                               const DesignMatrix& validation, const OutcomeColumn& validation_outcome,
                               const SelectionOptions& options = {});

nlohmann::json to_json(const SelectionTrace& trace);
SelectionTrace selection_trace_from_json(const nlohmann::json& doc);
// "608 -> (-93 univariate) -> (-465 backward) -> 50"
std::string render_pipeline(const SelectionTrace& trace);

}  // namespace survwright::selection
