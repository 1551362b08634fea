#pragma once

// Censoring-aware evaluation: Harrell's concordance index, percentile
// bootstrap, Kaplan-Meier, decile calibration at a horizon and the
// integrated calibration index.

#include <cstdint>
#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace survwright::eval {

// Over pairs where the shorter duration ends in an event (equal durations are
// not comparable), the share in which that subject has the higher score; tied
// scores count one half. O(N log N). Throws Error("no_pairs") when nothing is
// comparable.
double concordance_index(std::span<const double> risk, std::span<const double> duration,
                         std::span<const std::uint8_t> event);

struct Interval {
  double low = 0.0;
  double high = 0.0;
  std::size_t rounds_used = 0;
  std::size_t rounds_failed = 0;
};

// `metric` receives the resampled row indices (with replacement). Round r
// draws from derive_seed(seed, r). Failing rounds are skipped; more than half
// failing throws Error("bootstrap").
using ResampledMetric = std::function<double(std::span<const std::size_t>)>;
Interval bootstrap_ci(const ResampledMetric& metric, std::size_t n, std::size_t rounds = 50,
                      double level = 0.95, std::uint64_t seed = 0);

struct KMCurve {
  std::vector<double> times;  // distinct event times
  std::vector<double> survival;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;

  // Right-continuous, 1 before the first event time.
  double operator()(double t) const;
};

KMCurve kaplan_meier(std::span<const double> duration, std::span<const std::uint8_t> event);

struct CalibrationBin {
  double mean_predicted = 0.0;
  std::optional<double> observed;  // 1 - KM(horizon); empty when not estimable
  std::size_t count = 0;
  std::size_t events = 0;
  double low = 0.0;  // prediction range covered
  double high = 0.0;
};

// Equal-count bins of predicted risk (edges never split tied predictions, so
// identical predictions form a single bin). Observed risk per bin from a
// within-bin Kaplan-Meier. A bin with no events and nobody followed to the
// horizon is not estimable.
std::vector<CalibrationBin> calibration_curve(std::span<const double> predicted,
                                              std::span<const double> duration,
                                              std::span<const std::uint8_t> event, double horizon = 10.0,
                                              std::size_t bins = 10);

// Count-weighted mean |observed - predicted| over estimable bins.
double integrated_calibration_index(std::span<const CalibrationBin> bins);

struct SmoothPoint {
  double predicted = 0.0;
  double observed = 0.0;
};

// Local-linear (tricube, span 0.75) smooth of observed on predicted through
// the estimable bins, weighted by bin count. For plotting only.
std::vector<SmoothPoint> smooth_calibration(std::span<const CalibrationBin> bins, double span = 0.75);

struct EvalReport {
  std::size_t n = 0;
  std::size_t events = 0;
  double c_index = 0.0;
  Interval c_index_ci;
  double horizon = 10.0;
  std::vector<CalibrationBin> bins;
  double ici = 0.0;
  double mean_predicted_risk = 0.0;
  double observed_risk = 0.0;  // 1 - KM(horizon) over everyone
};

struct EvalOptions {
  double horizon = 10.0;
  std::size_t bins = 10;
  std::size_t rounds = 50;
  double level = 0.95;
  std::uint64_t seed = 0;
};

// `score` ranks subjects (higher = riskier); `predicted` is the horizon risk.
EvalReport evaluate(std::span<const double> score, std::span<const double> predicted,
                    std::span<const double> duration, std::span<const std::uint8_t> event,
                    const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const KMCurve& km);
// bin,mean_predicted,observed,count
std::string calibration_csv(std::span<const CalibrationBin> bins);
// "0.7443 [0.7441 – 0.7445]"
std::string format_cindex(double point, const Interval& ci);
// fraction 0.00295 -> "0.295%"
std::string format_percent(double fraction);

}  // namespace survwright::eval
