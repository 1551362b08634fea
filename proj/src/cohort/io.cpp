#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "survwright/cohort.hpp"
#include "survwright/csv.hpp"
#include "survwright/error.hpp"

namespace survwright::cohort {

std::size_t RawColumn::missing_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < size(); ++i) n += missing(i) ? 1 : 0;
  return n;
}

std::size_t RawCohort::missing_count() const {
  std::size_t n = 0;
  for (const auto& [name, col] : columns) n += col.missing_count();
  return n;
}

RawCohort RawCohort::select_rows(std::span<const std::size_t> rows) const {
  RawCohort out;
  out.row_ids.reserve(rows.size());
  for (auto r : rows) out.row_ids.push_back(row_ids[r]);
  for (const auto& [name, col] : columns) {
    RawColumn c;
    c.kind = col.kind;
    if (col.is_labelled()) {
      c.labels.reserve(rows.size());
      for (auto r : rows) c.labels.push_back(col.labels[r]);
    } else {
      c.numbers.reserve(rows.size());
      for (auto r : rows) c.numbers.push_back(col.numbers[r]);
    }
    out.columns.emplace(name, std::move(c));
  }
  for (const auto& [name, values] : outcome_fields) {
    std::vector<std::optional<double>> v;
    v.reserve(rows.size());
    for (auto r : rows) v.push_back(values[r]);
    out.outcome_fields.emplace(name, std::move(v));
  }
  return out;
}

nlohmann::json to_json(const QualityReport& report) {
  return {{"rows_loaded", report.rows_loaded},
          {"missing", report.missing},
          {"zero_denominator", report.zero_denominator},
          {"dropped_rare", report.dropped_rare},
          {"excluded_subjects", report.excluded_subjects}};
}

std::optional<std::int64_t> parse_day(std::string_view text) {
  if (text.size() == 10 && text[4] == '-' && text[7] == '-') {
    int y = 0;
    unsigned m = 0, d = 0;
    auto ok = [](auto res) { return res.ec == std::errc{}; };
    if (!ok(std::from_chars(text.data(), text.data() + 4, y)) ||
        !ok(std::from_chars(text.data() + 5, text.data() + 7, m)) ||
        !ok(std::from_chars(text.data() + 8, text.data() + 10, d))) {
      return std::nullopt;
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return std::chrono::sys_days{ymd}.time_since_epoch().count();
  }
  std::int64_t day = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), day);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
  return day;
}

std::string format_day(std::int64_t day) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

namespace {

bool is_missing(std::string_view cell) { return cell.empty() || cell == "NA"; }

std::optional<double> parse_number(std::string_view text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::optional<double> parse_flag(std::string_view text) {
  if (text == "true" || text == "yes" || text == "TRUE") return 1.0;
  if (text == "false" || text == "no" || text == "FALSE") return 0.0;
  auto v = parse_number(text);
  if (v && (*v == 0.0 || *v == 1.0)) return v;
  return std::nullopt;
}

[[noreturn]] void parse_failure(std::size_t line, const std::string& column, std::string_view cell,
                                std::string_view what) {
  throw Error("csv_parse", fmt::format("line {}, column '{}': cannot parse '{}' as {}", line, column,
                                       cell, what));
}

enum class Slot { id, feature, duration, flag, date };

struct ColumnBinding {
  Slot slot;
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
};

std::string format_number(double v) { return fmt::format("{}", v); }

}  // namespace

RawCohort load_cohort(std::istream& in, const CohortSchema& schema) {
  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw Error("schema", "CSV has no header row");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  const auto& o = schema.outcome;
  std::set<std::string> date_columns(o.event_date_columns.begin(), o.event_date_columns.end());
  if (o.uses_dates()) {
    date_columns.insert(o.assessment_date_column);
    if (!o.death_date_column.empty()) date_columns.insert(o.death_date_column);
  }
  for (const auto& r : schema.exclusion_rules) date_columns.insert(r.date_columns.begin(), r.date_columns.end());
  date_columns.insert(schema.date_columns.begin(), schema.date_columns.end());

  std::vector<ColumnBinding> bindings;
  std::set<std::string> seen;
  for (const auto& col : header) {
    if (!seen.insert(col).second) throw Error("schema", "duplicate CSV column '" + col + "'");
    if (col == schema.id_column) {
      bindings.push_back({Slot::id, col});
    } else if (const auto* f = schema.find(col)) {
      bindings.push_back({Slot::feature, col, f->kind});
    } else if (!o.uses_dates() && col == o.duration_column) {
      bindings.push_back({Slot::duration, col});
    } else if (!o.uses_dates() && col == o.event_column) {
      bindings.push_back({Slot::flag, col});
    } else if (date_columns.count(col)) {
      bindings.push_back({Slot::date, col});
    } else {
      throw Error("schema", "unknown column '" + col + "' not described by the schema");
    }
  }
  for (const auto& f : schema.features) {
    if (f.kind != FeatureKind::derived && !seen.count(f.name)) {
      throw Error("schema", "CSV is missing schema column '" + f.name + "'");
    }
  }
  std::vector<std::string> required = o.uses_dates() ? std::vector<std::string>(date_columns.begin(), date_columns.end())
                                                     : std::vector<std::string>{o.duration_column, o.event_column};
  for (const auto& c : required) {
    if (!seen.count(c)) throw Error("schema", "CSV is missing outcome column '" + c + "'");
  }

  RawCohort raw;
  for (const auto& b : bindings) {
    if (b.slot == Slot::feature) {
      raw.columns[b.name].kind = b.kind;
    } else if (b.slot != Slot::id) {
      raw.outcome_fields[b.name];
    }
  }

  std::vector<std::string> fields;
  std::size_t row = 0;
  while (reader.next(fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != header.size()) {
      throw Error("csv_parse", fmt::format("line {}: expected {} fields, found {}", reader.line(),
                                           header.size(), fields.size()));
    }
    ++row;
    bool has_id = false;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto& b = bindings[c];
      std::string_view cell = fields[c];
      switch (b.slot) {
        case Slot::id:
          raw.row_ids.push_back(fields[c]);
          has_id = true;
          break;
        case Slot::feature: {
          auto& col = raw.columns[b.name];
          if (col.is_labelled()) {
            col.labels.push_back(is_missing(cell) ? std::nullopt : std::optional<std::string>(fields[c]));
          } else if (is_missing(cell)) {
            col.numbers.push_back(std::nullopt);
          } else {
            auto v = b.kind == FeatureKind::binary ? parse_flag(cell) : parse_number(cell);
            if (!v) parse_failure(reader.line(), b.name, cell, to_string(b.kind));
            col.numbers.push_back(v);
          }
          break;
        }
        case Slot::duration:
        case Slot::flag:
        case Slot::date: {
          auto& values = raw.outcome_fields[b.name];
          if (is_missing(cell)) {
            values.push_back(std::nullopt);
            break;
          }
          std::optional<double> v;
          if (b.slot == Slot::duration) v = parse_number(cell);
          if (b.slot == Slot::flag) v = parse_flag(cell);
          if (b.slot == Slot::date) {
            if (auto d = parse_day(cell)) v = static_cast<double>(*d);
          }
          if (!v) parse_failure(reader.line(), b.name, cell, b.slot == Slot::date ? "date" : "number");
          values.push_back(v);
          break;
        }
      }
    }
    if (!has_id) raw.row_ids.push_back(std::to_string(row));
  }
  return raw;
}

RawCohort load_cohort(const std::filesystem::path& path, const CohortSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open CSV file " + path.string());
  return load_cohort(in, schema);
}

void write_cohort(std::ostream& out, const RawCohort& raw, const CohortSchema& schema) {
  std::vector<std::string> header{schema.id_column};
  for (const auto& f : schema.features) {
    if (raw.columns.count(f.name)) header.push_back(f.name);
  }
  std::vector<std::string> outcome_names;
  for (const auto& c : schema.outcome.columns()) {
    if (raw.outcome_fields.count(c)) outcome_names.push_back(c);
  }
  std::vector<std::string> extra;
  for (const auto& r : schema.exclusion_rules) extra.insert(extra.end(), r.date_columns.begin(), r.date_columns.end());
  extra.insert(extra.end(), schema.date_columns.begin(), schema.date_columns.end());
  for (const auto& c : extra) {
    if (raw.outcome_fields.count(c) &&
        std::find(outcome_names.begin(), outcome_names.end(), c) == outcome_names.end()) {
      outcome_names.push_back(c);
    }
  }
  header.insert(header.end(), outcome_names.begin(), outcome_names.end());
  csv::write_row(out, header);

  std::vector<std::string> fields;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    fields.clear();
    fields.push_back(raw.row_ids[i]);
    for (std::size_t h = 1; h < header.size() - outcome_names.size(); ++h) {
      const auto& col = raw.columns.at(header[h]);
      if (col.is_labelled()) {
        fields.push_back(col.labels[i].value_or(""));
      } else {
        fields.push_back(col.numbers[i] ? format_number(*col.numbers[i]) : "");
      }
    }
    for (const auto& c : outcome_names) {
      const auto& v = raw.outcome_fields.at(c)[i];
      fields.push_back(v ? format_number(*v) : "");
    }
    csv::write_row(out, fields);
  }
}

}  // namespace survwright::cohort
