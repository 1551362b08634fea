#include <algorithm>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "survwright/cohort.hpp"
#include "survwright/stats.hpp"

namespace survwright::cohort {

using nlohmann::json;

namespace {

std::string display_name(const FeatureSpec& f) { return f.label.empty() ? f.name : f.label; }

std::string format_p(const std::optional<double>& p) {
  if (!p) return "n/a";
  if (*p < 0.001) return "<0.001";
  return fmt::format("{:.3f}", *p);
}

}  // namespace

CohortSummary summarize_cohort(const RawCohort& raw, const CohortSchema& schema, const OutcomeColumn& outcome) {
  CohortSummary summary;
  const std::size_t n = raw.size();
  // group index 1 = no event, 2 = event; group 0 is everyone
  auto group_of = [&](std::size_t i) { return outcome.event[i] ? 2 : 1; };
  summary.group_sizes = {static_cast<double>(n), 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) summary.group_sizes[group_of(i)] += 1.0;

  for (const auto& f : schema.features) {
    auto it = raw.columns.find(f.name);
    if (it == raw.columns.end()) continue;
    const auto& col = it->second;

    if (f.is_labelled() || f.kind == FeatureKind::binary) {
      std::vector<std::string> levels = f.is_labelled() ? f.categories : std::vector<std::string>{"1"};
      // table rows = levels (binary: 0/1), columns = no event / event
      std::vector<std::vector<double>> table;
      std::vector<std::vector<double>> counts;
      if (f.is_labelled()) {
        table.assign(f.categories.size(), std::vector<double>(2, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
          if (!col.labels[i]) continue;
          auto pos = std::find(f.categories.begin(), f.categories.end(), *col.labels[i]);
          if (pos == f.categories.end()) continue;
          table[static_cast<std::size_t>(pos - f.categories.begin())][group_of(i) - 1] += 1.0;
        }
      } else {
        table.assign(2, std::vector<double>(2, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
          if (!col.numbers[i]) continue;
          table[*col.numbers[i] == 1.0 ? 1 : 0][group_of(i) - 1] += 1.0;
        }
      }
      const auto test = stats::chi_squared_independence(table);
      auto add_row = [&](const std::string& label, const std::vector<double>& cells) {
        SummaryRow row;
        row.label = label;
        row.count = {cells[0] + cells[1], cells[0], cells[1]};
        for (std::size_t g = 0; g < 3; ++g) {
          row.percent.push_back(summary.group_sizes[g] > 0 ? 100.0 * row.count[g] / summary.group_sizes[g] : 0.0);
        }
        row.p_value = test.p_value;
        row.test = "chi-squared";
        summary.rows.push_back(std::move(row));
      };
      if (f.is_labelled()) {
        for (std::size_t k = 0; k < f.categories.size(); ++k) {
          add_row(display_name(f) + ": " + f.categories[k], table[k]);
        }
      } else {
        add_row(display_name(f), table[1]);
      }
      continue;
    }

    std::vector<double> values[3];
    for (std::size_t i = 0; i < n; ++i) {
      if (!col.numbers[i]) continue;
      values[0].push_back(*col.numbers[i]);
      values[group_of(i)].push_back(*col.numbers[i]);
    }
    SummaryRow row;
    row.label = display_name(f);
    row.continuous = true;
    for (auto& v : values) {
      std::sort(v.begin(), v.end());
      row.count.push_back(static_cast<double>(v.size()));
      if (v.empty()) {
        row.median.push_back(0.0);
        row.q1.push_back(0.0);
        row.q3.push_back(0.0);
        continue;
      }
      row.median.push_back(stats::quantile_sorted(v, 0.5));
      row.q1.push_back(stats::quantile_sorted(v, 0.25));
      row.q3.push_back(stats::quantile_sorted(v, 0.75));
    }
    row.p_value = stats::kruskal_wallis({values[1], values[2]}).p_value;
    row.test = "kruskal-wallis";
    summary.rows.push_back(std::move(row));
  }
  return summary;
}

json to_json(const CohortSummary& summary) {
  json rows = json::array();
  for (const auto& r : summary.rows) {
    json j{{"label", r.label}, {"test", r.test}};
    j["p_value"] = r.p_value ? json(*r.p_value) : json(nullptr);
    if (r.continuous) {
      j["median"] = r.median;
      j["q1"] = r.q1;
      j["q3"] = r.q3;
    } else {
      j["count"] = r.count;
      j["percent"] = r.percent;
    }
    rows.push_back(std::move(j));
  }
  return {{"groups", {"All participants", "No incident event", "Incident event"}},
          {"group_sizes", summary.group_sizes},
          {"rows", std::move(rows)}};
}

std::string render_table(const CohortSummary& summary) {
  std::string out = "\tAll participants\tNo incident event\tIncident event\tP-Value\n";
  out += fmt::format("Total\t{:.0f}\t{:.0f}\t{:.0f}\t\n", summary.group_sizes[0], summary.group_sizes[1],
                     summary.group_sizes[2]);
  for (const auto& r : summary.rows) {
    if (r.continuous) {
      out += r.label + ", median [Q1,Q3]";
      for (std::size_t g = 0; g < 3; ++g) {
        out += fmt::format("\t{:.2f} [{:.2f},{:.2f}]", r.median[g], r.q1[g], r.q3[g]);
      }
    } else {
      out += r.label + ", n (%)";
      for (std::size_t g = 0; g < 3; ++g) out += fmt::format("\t{:.0f} ({:.2f})", r.count[g], r.percent[g]);
    }
    out += "\t" + format_p(r.p_value) + "\n";
  }
  return out;
}

}  // namespace survwright::cohort
