#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "survwright/cohort.hpp"
#include "survwright/error.hpp"
#include "survwright/stats.hpp"

namespace survwright::cohort {

std::size_t OutcomeColumn::event_count() const {
  return static_cast<std::size_t>(std::count(event.begin(), event.end(), std::uint8_t{1}));
}

OutcomeColumn OutcomeColumn::select(std::span<const std::size_t> rows) const {
  OutcomeColumn out;
  out.duration.reserve(rows.size());
  out.event.reserve(rows.size());
  for (auto r : rows) {
    out.duration.push_back(duration[r]);
    out.event.push_back(event[r]);
  }
  return out;
}

void OutcomeColumn::validate() const {
  if (duration.size() != event.size()) throw Error("outcome", "duration/event length mismatch");
  for (std::size_t i = 0; i < duration.size(); ++i) {
    if (!(duration[i] > 0.0) || !std::isfinite(duration[i])) {
      throw Error("outcome", fmt::format("subject {} has non-positive or non-finite duration", i));
    }
    if (event[i] > 1) throw Error("outcome", fmt::format("subject {} has a non-binary event flag", i));
  }
}

OutcomeBuild build_outcome(std::span<const SubjectDates> subjects, std::int64_t admin_censor_day) {
  OutcomeBuild out;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    if (admin_censor_day <= s.assessment_day) {
      throw Error("dates", fmt::format("subject {}: administrative censor date is not after assessment", i));
    }
    if (s.death_day && *s.death_day <= s.assessment_day) {
      throw Error("dates", fmt::format("subject {}: death date is not after assessment", i));
    }
    bool prior = false;
    std::optional<std::int64_t> first_event;
    for (const auto& d : s.event_days) {
      if (!d) continue;
      if (*d <= s.assessment_day) {
        prior = true;
        break;
      }
      if (!first_event || *d < *first_event) first_event = *d;
    }
    if (prior) {
      out.excluded.push_back(i);
      continue;
    }
    std::int64_t end = admin_censor_day;
    if (s.death_day) end = std::min(end, *s.death_day);
    bool event = false;
    if (first_event && *first_event <= end) {
      end = *first_event;
      event = true;
    }
    out.kept.push_back(i);
    out.outcome.duration.push_back(static_cast<double>(end - s.assessment_day) / kDaysPerYear);
    out.outcome.event.push_back(event ? 1 : 0);
  }
  return out;
}

OutcomeBuild extract_outcome(const RawCohort& raw, const CohortSchema& schema, QualityReport* report) {
  const auto& o = schema.outcome;
  const std::size_t n = raw.size();
  auto field = [&](const std::string& name) -> const std::vector<std::optional<double>>& {
    auto it = raw.outcome_fields.find(name);
    if (it == raw.outcome_fields.end()) throw Error("schema", "cohort has no outcome field '" + name + "'");
    return it->second;
  };

  if (!o.uses_dates()) {
    const auto& dur = field(o.duration_column);
    const auto& ev = field(o.event_column);
    OutcomeBuild out;
    for (std::size_t i = 0; i < n; ++i) {
      if (!dur[i] || !ev[i]) {
        throw Error("outcome", "subject '" + raw.row_ids[i] + "' has a missing duration or event");
      }
      out.kept.push_back(i);
      out.outcome.duration.push_back(*dur[i]);
      out.outcome.event.push_back(*ev[i] != 0.0 ? 1 : 0);
    }
    out.outcome.validate();
    return out;
  }

  std::vector<const std::vector<std::optional<double>>*> event_cols;
  for (const auto& c : o.event_date_columns) event_cols.push_back(&field(c));
  std::vector<const std::vector<std::optional<double>>*> prior_cols;
  for (const auto& r : schema.exclusion_rules) {
    for (const auto& c : r.date_columns) prior_cols.push_back(&field(c));
  }
  const auto& assessment = field(o.assessment_date_column);
  const std::vector<std::optional<double>>* death = o.death_date_column.empty() ? nullptr : &field(o.death_date_column);

  std::vector<SubjectDates> subjects(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!assessment[i]) throw Error("outcome", "subject '" + raw.row_ids[i] + "' has no assessment date");
    auto& s = subjects[i];
    s.assessment_day = static_cast<std::int64_t>(*assessment[i]);
    for (const auto* col : event_cols) {
      if ((*col)[i]) s.event_days.push_back(static_cast<std::int64_t>(*(*col)[i]));
    }
    // Prior-diagnosis rules only matter on or before assessment; such a date
    // counts like a pre-existing event.
    for (const auto* col : prior_cols) {
      if ((*col)[i] && static_cast<std::int64_t>(*(*col)[i]) <= s.assessment_day) {
        s.event_days.push_back(static_cast<std::int64_t>(*(*col)[i]));
      }
    }
    if (death && (*death)[i]) s.death_day = static_cast<std::int64_t>(*(*death)[i]);
  }
  auto out = build_outcome(subjects, o.admin_censor_day);
  if (report) {
    for (auto i : out.excluded) report->excluded_subjects.push_back(raw.row_ids[i]);
  }
  return out;
}

Split stratified_split(const OutcomeColumn& outcome, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("split", "fraction must lie in (0, 1)");
  std::vector<std::size_t> strata[2];
  for (std::size_t i = 0; i < outcome.size(); ++i) strata[outcome.event[i] ? 1 : 0].push_back(i);
  Rng rng(seed);
  Split out;
  for (auto& stratum : strata) {
    if (stratum.size() < 2) {
      throw Error("split", "each outcome stratum needs at least 2 subjects");
    }
    for (std::size_t i = stratum.size() - 1; i > 0; --i) {
      std::swap(stratum[i], stratum[rng() % (i + 1)]);
    }
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(stratum.size())));
    take = std::clamp<std::size_t>(take, 1, stratum.size() - 1);
    out.first.insert(out.first.end(), stratum.begin(), stratum.begin() + static_cast<std::ptrdiff_t>(take));
    out.second.insert(out.second.end(), stratum.begin() + static_cast<std::ptrdiff_t>(take), stratum.end());
  }
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

}  // namespace survwright::cohort
