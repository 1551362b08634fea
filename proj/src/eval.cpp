#include "survwright/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <numeric>

#include "survwright/error.hpp"
#include "survwright/stats.hpp"

namespace survwright::eval {

using nlohmann::json;

namespace {

void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) throw Error("dimension", "score, duration and event lengths differ");
}

// Counts over ranks 1..n.
class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t rank) {
    for (; rank < tree_.size(); rank += rank & (~rank + 1)) ++tree_[rank];
  }
  std::uint64_t prefix(std::size_t rank) const {
    std::uint64_t s = 0;
    for (; rank > 0; rank -= rank & (~rank + 1)) s += tree_[rank];
    return s;
  }

 private:
  std::vector<std::uint64_t> tree_;
};

}  // namespace

double concordance_index(std::span<const double> risk, std::span<const double> duration,
                         std::span<const std::uint8_t> event) {
  check_lengths(risk.size(), duration.size(), event.size());
  const std::size_t n = risk.size();
  for (double r : risk) {
    if (!std::isfinite(r)) throw Error("non_finite", "risk scores must be finite");
  }

  std::vector<double> sorted_risk(risk.begin(), risk.end());
  std::sort(sorted_risk.begin(), sorted_risk.end());
  sorted_risk.erase(std::unique(sorted_risk.begin(), sorted_risk.end()), sorted_risk.end());
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<std::size_t>(std::lower_bound(sorted_risk.begin(), sorted_risk.end(), risk[i]) -
                                       sorted_risk.begin()) + 1;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return duration[a] > duration[b]; });

  // Walk groups of equal duration from the longest; the tree holds everyone
  // strictly later than the current group.
  Fenwick tree(sorted_risk.size());
  std::uint64_t comparable = 0, twice_concordant = 0;
  std::size_t inserted = 0;
  for (std::size_t g = 0; g < n;) {
    std::size_t end = g;
    while (end < n && duration[order[end]] == duration[order[g]]) ++end;
    for (std::size_t k = g; k < end; ++k) {
      const std::size_t i = order[k];
      if (!event[i]) continue;
      const std::uint64_t lower = tree.prefix(rank[i] - 1);
      const std::uint64_t tied = tree.prefix(rank[i]) - lower;
      comparable += inserted;
      twice_concordant += 2 * lower + tied;
    }
    for (std::size_t k = g; k < end; ++k) tree.add(rank[order[k]]);
    inserted += end - g;
    g = end;
  }
  if (comparable == 0) throw Error("no_pairs", "no comparable pairs");
  return static_cast<double>(twice_concordant) / (2.0 * static_cast<double>(comparable));
}

Interval bootstrap_ci(const ResampledMetric& metric, std::size_t n, std::size_t rounds, double level,
                      std::uint64_t seed) {
  if (rounds < 2) throw Error("bootstrap", "rounds must be at least 2");
  if (n == 0) throw Error("bootstrap", "no rows to resample");
  if (!(level > 0.0 && level < 1.0)) throw Error("bootstrap", "level must lie in (0, 1)");
  std::vector<double> values;
  Interval out;
  std::vector<std::size_t> rows(n);
  for (std::size_t r = 0; r < rounds; ++r) {
    Rng rng(derive_seed(seed, r));
    for (auto& row : rows) {
      row = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
    }
    try {
      const double v = metric(rows);
      if (!std::isfinite(v)) throw Error("non_finite", "metric returned a non-finite value");
      values.push_back(v);
    } catch (const std::exception&) {
      ++out.rounds_failed;
    }
  }
  if (2 * out.rounds_failed > rounds) {
    throw Error("bootstrap", fmt::format("{} of {} bootstrap rounds failed", out.rounds_failed, rounds));
  }
  std::sort(values.begin(), values.end());
  const double tail = (1.0 - level) / 2.0;
  out.low = stats::quantile_sorted(values, tail);
  out.high = stats::quantile_sorted(values, 1.0 - tail);
  out.rounds_used = values.size();
  return out;
}

double KMCurve::operator()(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

KMCurve kaplan_meier(std::span<const double> duration, std::span<const std::uint8_t> event) {
  if (duration.size() != event.size()) throw Error("dimension", "duration and event lengths differ");
  std::vector<std::size_t> order(duration.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return duration[a] < duration[b]; });
  KMCurve km;
  double s = 1.0;
  std::size_t at_risk = duration.size();
  for (std::size_t g = 0; g < order.size();) {
    std::size_t end = g, deaths = 0;
    while (end < order.size() && duration[order[end]] == duration[order[g]]) deaths += event[order[end++]];
    if (deaths) {
      s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
      km.times.push_back(duration[order[g]]);
      km.survival.push_back(s);
      km.at_risk.push_back(at_risk);
      km.events.push_back(deaths);
    }
    at_risk -= end - g;
    g = end;
  }
  return km;
}

std::vector<CalibrationBin> calibration_curve(std::span<const double> predicted, std::span<const double> duration,
                                              std::span<const std::uint8_t> event, double horizon,
                                              std::size_t bins) {
  check_lengths(predicted.size(), duration.size(), event.size());
  if (bins < 1) throw Error("calibration", "bins must be at least 1");
  const std::size_t n = predicted.size();
  for (double p : predicted) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error("calibration", "predicted risks must lie in [0, 1]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return predicted[a] < predicted[b]; });

  std::vector<CalibrationBin> out;
  std::size_t begin = 0;
  for (std::size_t b = 1; b <= bins && begin < n; ++b) {
    std::size_t end = b == bins ? n : std::max(begin + 1, (b * n + bins / 2) / bins);
    while (end < n && predicted[order[end]] == predicted[order[end - 1]]) ++end;
    if (end <= begin) continue;

    CalibrationBin bin;
    std::vector<double> d;
    std::vector<std::uint8_t> e;
    double sum = 0.0;
    std::size_t followed = 0;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i = order[k];
      sum += predicted[i];
      d.push_back(duration[i]);
      e.push_back(event[i]);
      bin.events += event[i];
      followed += duration[i] >= horizon ? 1 : 0;
    }
    bin.count = end - begin;
    bin.mean_predicted = sum / static_cast<double>(bin.count);
    bin.low = predicted[order[begin]];
    bin.high = predicted[order[end - 1]];
    if (bin.events > 0 || followed > 0) bin.observed = 1.0 - kaplan_meier(d, e)(horizon);
    out.push_back(bin);
    begin = end;
  }
  return out;
}

double integrated_calibration_index(std::span<const CalibrationBin> bins) {
  double num = 0.0, den = 0.0;
  for (const auto& b : bins) {
    if (!b.observed) continue;
    num += static_cast<double>(b.count) * std::abs(*b.observed - b.mean_predicted);
    den += static_cast<double>(b.count);
  }
  if (den == 0.0) throw Error("calibration", "no estimable calibration bin");
  return num / den;
}

std::vector<SmoothPoint> smooth_calibration(std::span<const CalibrationBin> bins, double span) {
  std::vector<const CalibrationBin*> pts;
  for (const auto& b : bins) {
    if (b.observed) pts.push_back(&b);
  }
  std::vector<SmoothPoint> out;
  if (pts.empty()) return out;
  const std::size_t m = pts.size();
  const std::size_t k = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(span * static_cast<double>(m))));
  for (const auto* target : pts) {
    const double x0 = target->mean_predicted;
    std::vector<double> dist;
    for (const auto* p : pts) dist.push_back(std::abs(p->mean_predicted - x0));
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    const double h = std::max(sorted[std::min(k, m) - 1], 1e-12) * (1.0 + 1e-9);
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double u = dist[j] / h;
      if (u >= 1.0) continue;
      const double tri = std::pow(1.0 - u * u * u, 3.0);
      const double w = tri * static_cast<double>(pts[j]->count);
      const double x = pts[j]->mean_predicted - x0, y = *pts[j]->observed;
      sw += w;
      sx += w * x;
      sy += w * y;
      sxx += w * x * x;
      sxy += w * x * y;
    }
    const double det = sw * sxx - sx * sx;
    // Intercept of the local line at x0; falls back to a weighted mean.
    const double y0 = std::abs(det) > 1e-14 * std::max(1.0, sw * sxx) ? (sxx * sy - sx * sxy) / det : sy / sw;
    out.push_back({x0, std::clamp(y0, 0.0, 1.0)});
  }
  return out;
}

EvalReport evaluate(std::span<const double> score, std::span<const double> predicted,
                    std::span<const double> duration, std::span<const std::uint8_t> event,
                    const EvalOptions& options) {
  check_lengths(score.size(), duration.size(), event.size());
  check_lengths(predicted.size(), duration.size(), event.size());
  EvalReport r;
  r.n = score.size();
  r.events = static_cast<std::size_t>(std::count(event.begin(), event.end(), 1));
  r.horizon = options.horizon;
  r.c_index = concordance_index(score, duration, event);
  std::vector<double> s, d;
  std::vector<std::uint8_t> e;
  r.c_index_ci = bootstrap_ci(
      [&](std::span<const std::size_t> rows) {
        s.clear();
        d.clear();
        e.clear();
        for (auto i : rows) {
          s.push_back(score[i]);
          d.push_back(duration[i]);
          e.push_back(event[i]);
        }
        return concordance_index(s, d, e);
      },
      r.n, options.rounds, options.level, options.seed);
  r.bins = calibration_curve(predicted, duration, event, options.horizon, options.bins);
  r.ici = integrated_calibration_index(r.bins);
  r.mean_predicted_risk = stats::mean(predicted);
  r.observed_risk = 1.0 - kaplan_meier(duration, event)(options.horizon);
  return r;
}

json to_json(const EvalReport& report) {
  json bins = json::array();
  for (const auto& b : report.bins) {
    bins.push_back({{"mean_predicted", b.mean_predicted},
                    {"observed", b.observed ? json(*b.observed) : json(nullptr)},
                    {"count", b.count},
                    {"events", b.events},
                    {"low", b.low},
                    {"high", b.high}});
  }
  return {{"n", report.n},
          {"events", report.events},
          {"c_index", report.c_index},
          {"c_index_ci",
           {{"low", report.c_index_ci.low},
            {"high", report.c_index_ci.high},
            {"rounds_used", report.c_index_ci.rounds_used},
            {"rounds_failed", report.c_index_ci.rounds_failed}}},
          {"c_index_text", format_cindex(report.c_index, report.c_index_ci)},
          {"horizon", report.horizon},
          {"ici", report.ici},
          {"ici_text", format_percent(report.ici)},
          {"mean_predicted_risk", report.mean_predicted_risk},
          {"observed_risk", report.observed_risk},
          {"calibration_bins", std::move(bins)}};
}

json to_json(const KMCurve& km) {
  return {{"times", km.times}, {"survival", km.survival}, {"at_risk", km.at_risk}, {"events", km.events}};
}

std::string calibration_csv(std::span<const CalibrationBin> bins) {
  std::string out = "bin,mean_predicted,observed,count\n";
  for (std::size_t b = 0; b < bins.size(); ++b) {
    out += fmt::format("{},{},{},{}\n", b + 1, bins[b].mean_predicted,
                       bins[b].observed ? fmt::format("{}", *bins[b].observed) : std::string("NA"), bins[b].count);
  }
  return out;
}

std::string format_cindex(double point, const Interval& ci) {
  return fmt::format("{:.4f} [{:.4f} – {:.4f}]", point, ci.low, ci.high);
}

std::string format_percent(double fraction) { return fmt::format("{:.3f}%", 100.0 * fraction); }

}  // namespace survwright::eval
