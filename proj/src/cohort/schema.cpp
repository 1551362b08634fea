#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "survwright/cohort.hpp"
#include "survwright/error.hpp"

namespace survwright::cohort {

using nlohmann::json;

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::continuous: return "continuous";
    case FeatureKind::binary: return "binary";
    case FeatureKind::categorical: return "categorical";
    case FeatureKind::ordinal: return "ordinal";
    case FeatureKind::derived: return "derived";
  }
  return "continuous";
}

FeatureKind parse_feature_kind(std::string_view text) {
  if (text == "continuous") return FeatureKind::continuous;
  if (text == "binary") return FeatureKind::binary;
  if (text == "categorical") return FeatureKind::categorical;
  if (text == "ordinal") return FeatureKind::ordinal;
  if (text == "derived") return FeatureKind::derived;
  throw Error("schema", "unknown feature kind '" + std::string(text) + "'");
}

namespace {

std::string_view to_string(Derivation d) {
  switch (d) {
    case Derivation::ratio: return "ratio";
    case Derivation::sum: return "sum";
    case Derivation::none: break;
  }
  return "none";
}

Derivation parse_derivation(std::string_view text) {
  if (text == "ratio") return Derivation::ratio;
  if (text == "sum") return Derivation::sum;
  throw Error("schema", "unknown derivation '" + std::string(text) + "'");
}

}  // namespace

bool FeatureSpec::has_tag(std::string_view tag) const {
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

std::vector<std::string> OutcomeSpec::columns() const {
  std::vector<std::string> out;
  if (uses_dates()) {
    out = event_date_columns;
    out.push_back(assessment_date_column);
    if (!death_date_column.empty()) out.push_back(death_date_column);
  } else {
    out = {duration_column, event_column};
  }
  return out;
}

const FeatureSpec* CohortSchema::find(std::string_view name) const {
  for (const auto& f : features) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

const FeatureSpec& CohortSchema::at(std::string_view name) const {
  if (const auto* f = find(name)) return *f;
  throw Error("schema", "unknown feature '" + std::string(name) + "'");
}

FeatureSpec& CohortSchema::at(std::string_view name) {
  for (auto& f : features) {
    if (f.name == name) return f;
  }
  throw Error("schema", "unknown feature '" + std::string(name) + "'");
}

std::optional<std::string> CohortSchema::sex_feature() const {
  for (const auto& f : features) {
    if (f.has_tag("sex")) return f.name;
  }
  return std::nullopt;
}

void CohortSchema::validate() const {
  if (schema_version != kSchemaVersion) {
    throw Error("schema", "unsupported schema_version " + std::to_string(schema_version));
  }
  std::set<std::string> names;
  std::set<std::string> reserved{id_column};
  for (const auto& c : outcome.columns()) reserved.insert(c);
  for (const auto& r : exclusion_rules) reserved.insert(r.date_columns.begin(), r.date_columns.end());
  reserved.insert(date_columns.begin(), date_columns.end());

  for (const auto& f : features) {
    if (f.name.empty()) throw Error("schema", "feature with empty name");
    if (f.name.find('=') != std::string::npos) {
      throw Error("schema", "feature name '" + f.name + "' may not contain '='");
    }
    if (!names.insert(f.name).second) throw Error("schema", "duplicate feature '" + f.name + "'");
    if (reserved.count(f.name)) {
      throw Error("schema", "feature '" + f.name + "' collides with an id/outcome column");
    }
    if (f.is_labelled() && f.categories.size() < 2) {
      throw Error("schema", "feature '" + f.name + "' needs at least 2 categories");
    }
    if (f.is_labelled()) {
      std::set<std::string> levels(f.categories.begin(), f.categories.end());
      if (levels.size() != f.categories.size()) {
        throw Error("schema", "feature '" + f.name + "' has duplicate categories");
      }
    }
    if (f.kind == FeatureKind::derived) {
      if (f.derivation == Derivation::none || f.inputs.empty()) {
        throw Error("schema", "derived feature '" + f.name + "' needs a derivation and inputs");
      }
      if (f.derivation == Derivation::ratio && f.inputs.size() != 2) {
        throw Error("schema", "ratio feature '" + f.name + "' needs exactly 2 inputs");
      }
      for (const auto& in : f.inputs) {
        // Inputs must be declared earlier, which also rules out cycles.
        if (!names.count(in) || in == f.name) {
          throw Error("schema", "derived feature '" + f.name + "' references unknown or later input '" +
                                    in + "'");
        }
        if (find(in)->is_labelled()) {
          throw Error("schema", "derived feature '" + f.name + "' input '" + in + "' is not numeric");
        }
      }
    }
    if (f.has_tag("sex") && f.kind != FeatureKind::binary) {
      throw Error("schema", "sex feature '" + f.name + "' must be binary (1 = female)");
    }
  }

  const bool has_duration = !outcome.duration_column.empty() || !outcome.event_column.empty();
  if (has_duration == outcome.uses_dates()) {
    throw Error("schema", "outcome must be exactly one of duration/event or event dates");
  }
  if (has_duration && (outcome.duration_column.empty() || outcome.event_column.empty())) {
    throw Error("schema", "outcome needs both duration and event columns");
  }
  if (outcome.uses_dates() && outcome.assessment_date_column.empty()) {
    throw Error("schema", "date outcome needs an assessment_date column");
  }
  if (!exclusion_rules.empty() && !outcome.uses_dates()) {
    throw Error("schema", "exclusion rules need the date outcome form");
  }
}

json to_json(const CohortSchema& schema) {
  json features = json::array();
  for (const auto& f : schema.features) {
    json j{{"name", f.name}, {"kind", to_string(f.kind)}};
    if (!f.categories.empty()) j["categories"] = f.categories;
    if (f.derivation != Derivation::none) {
      j["derivation"] = to_string(f.derivation);
      j["inputs"] = f.inputs;
    }
    if (!f.unit.empty()) j["unit"] = f.unit;
    if (!f.label.empty()) j["label"] = f.label;
    if (!f.tags.empty()) j["tags"] = f.tags;
    if (!f.model_input) j["model_input"] = false;
    features.push_back(std::move(j));
  }
  json outcome;
  const auto& o = schema.outcome;
  if (o.uses_dates()) {
    outcome["event_dates"] = o.event_date_columns;
    outcome["assessment_date"] = o.assessment_date_column;
    if (!o.death_date_column.empty()) outcome["death_date"] = o.death_date_column;
    outcome["admin_censor_date"] = format_day(o.admin_censor_day);
  } else {
    outcome["duration"] = o.duration_column;
    outcome["event"] = o.event_column;
  }
  json doc{{"schema_version", schema.schema_version},
           {"id_column", schema.id_column},
           {"features", std::move(features)},
           {"outcome", std::move(outcome)}};
  if (!schema.exclusion_rules.empty()) {
    json rules = json::array();
    for (const auto& r : schema.exclusion_rules) {
      rules.push_back({{"name", r.name}, {"date_columns", r.date_columns}});
    }
    doc["exclusion_rules"] = std::move(rules);
  }
  if (!schema.date_columns.empty()) doc["date_columns"] = schema.date_columns;
  return doc;
}

CohortSchema schema_from_json(const json& doc) {
  try {
    CohortSchema s;
    s.schema_version = doc.at("schema_version").get<int>();
    s.id_column = doc.value("id_column", std::string("id"));
    for (const auto& j : doc.at("features")) {
      FeatureSpec f;
      f.name = j.at("name").get<std::string>();
      f.kind = parse_feature_kind(j.at("kind").get<std::string>());
      f.categories = j.value("categories", std::vector<std::string>{});
      if (j.contains("derivation")) f.derivation = parse_derivation(j.at("derivation").get<std::string>());
      f.inputs = j.value("inputs", std::vector<std::string>{});
      f.unit = j.value("unit", std::string{});
      f.label = j.value("label", std::string{});
      f.tags = j.value("tags", std::vector<std::string>{});
      f.model_input = j.value("model_input", true);
      s.features.push_back(std::move(f));
    }
    const auto& o = doc.at("outcome");
    if (o.contains("event_dates")) {
      s.outcome.event_date_columns = o.at("event_dates").get<std::vector<std::string>>();
      s.outcome.assessment_date_column = o.at("assessment_date").get<std::string>();
      s.outcome.death_date_column = o.value("death_date", std::string{});
      const auto& admin = o.at("admin_censor_date");
      std::optional<std::int64_t> day =
          admin.is_string() ? parse_day(admin.get<std::string>()) : admin.get<std::int64_t>();
      if (!day) throw Error("schema", "admin_censor_date is not a date");
      s.outcome.admin_censor_day = *day;
    } else {
      s.outcome.duration_column = o.at("duration").get<std::string>();
      s.outcome.event_column = o.at("event").get<std::string>();
    }
    if (doc.contains("exclusion_rules")) {
      for (const auto& r : doc.at("exclusion_rules")) {
        s.exclusion_rules.push_back({r.at("name").get<std::string>(),
                                     r.at("date_columns").get<std::vector<std::string>>()});
      }
    }
    s.date_columns = doc.value("date_columns", std::vector<std::string>{});
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw Error("schema", std::string("malformed schema document: ") + e.what());
  }
}

CohortSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open schema file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("schema", path.string() + ": " + e.what());
  }
  return schema_from_json(doc);
}

std::string_view to_string(Variant v) { return v == Variant::digital ? "digital" : "full"; }

std::string_view to_string(SexScope s) {
  switch (s) {
    case SexScope::male: return "male";
    case SexScope::female: return "female";
    case SexScope::all: break;
  }
  return "all";
}

Variant parse_variant(std::string_view text) {
  if (text == "full") return Variant::full;
  if (text == "digital") return Variant::digital;
  throw Error("usage", "unknown variant '" + std::string(text) + "' (full|digital)");
}

SexScope parse_sex_scope(std::string_view text) {
  if (text == "all") return SexScope::all;
  if (text == "male") return SexScope::male;
  if (text == "female") return SexScope::female;
  throw Error("usage", "unknown sex scope '" + std::string(text) + "' (all|male|female)");
}

namespace {

bool excluded_in_digital(const FeatureSpec& f) { return f.has_tag("cholesterol") || f.has_tag("sbp"); }

}  // namespace

CohortSchema apply_variant(CohortSchema schema, Variant variant) {
  for (auto& f : schema.features) {
    if (variant == Variant::full) {
      if (f.has_tag("heart_rate")) f.model_input = false;
    } else {
      if (excluded_in_digital(f)) f.model_input = false;
      if (f.has_tag("heart_rate")) f.model_input = true;
    }
  }
  return schema;
}

void check_variant(const CohortSchema& schema, std::span<const std::string> columns, Variant variant) {
  if (variant != Variant::digital) return;
  bool has_heart_rate = false;
  for (const auto& col : columns) {
    const auto feature = col.substr(0, col.find('='));
    const auto* f = schema.find(feature);
    if (!f) throw Error("variant", "column '" + col + "' has no schema feature");
    if (excluded_in_digital(*f)) {
      throw Error("variant", "digital variant cannot contain column '" + col + "'");
    }
    has_heart_rate = has_heart_rate || f->has_tag("heart_rate");
  }
  if (!has_heart_rate) throw Error("variant", "digital variant requires a heart-rate column");
}

CohortSchema apply_sex_scope(CohortSchema schema, SexScope scope) {
  if (scope == SexScope::all) return schema;
  const auto sex = schema.sex_feature();
  if (!sex) throw Error("schema", "sex-specific scope needs a feature tagged 'sex'");
  schema.at(*sex).model_input = false;
  return schema;
}

std::vector<std::size_t> rows_for_sex(const RawCohort& raw, const CohortSchema& schema, SexScope scope) {
  std::vector<std::size_t> rows;
  if (scope == SexScope::all) {
    rows.resize(raw.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return rows;
  }
  const auto sex = schema.sex_feature();
  if (!sex) throw Error("schema", "sex-specific scope needs a feature tagged 'sex'");
  const auto& col = raw.columns.at(*sex).numbers;
  const double want = scope == SexScope::female ? 1.0 : 0.0;
  for (std::size_t i = 0; i < col.size(); ++i) {
    if (col[i] && *col[i] == want) rows.push_back(i);
  }
  return rows;
}

}  // namespace survwright::cohort
