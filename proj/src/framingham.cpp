#include "survwright/framingham.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "survwright/error.hpp"
#include "survwright/eval.hpp"

namespace survwright::framingham {

using nlohmann::json;

namespace {

const char* const kTerms[] = {"ln_age",           "ln_total_cholesterol", "ln_hdl_cholesterol", "ln_sbp_untreated",
                              "ln_sbp_treated",   "current_smoker",       "diabetes"};

double* term(SexCoefficients& s, int k) {
  double* fields[] = {&s.ln_age,           &s.ln_total_cholesterol, &s.ln_hdl_cholesterol, &s.ln_sbp_untreated,
                      &s.ln_sbp_treated,   &s.current_smoker,       &s.diabetes};
  return fields[k];
}

json sex_json(SexCoefficients s) {
  json coef = json::object();
  for (int k = 0; k < 7; ++k) coef[kTerms[k]] = *term(s, k);
  return {{"coefficients", coef},
          {"baseline_survival_10y", s.baseline_survival_10y},
          {"mean_linear_predictor", s.mean_linear_predictor}};
}

SexCoefficients sex_from_json(const json& doc, const char* sex) {
  if (!doc.contains(sex)) throw Error("coefficients", fmt::format("missing sex block: {}", sex));
  const auto& block = doc.at(sex);
  SexCoefficients s;
  if (!block.contains("coefficients")) throw Error("coefficients", fmt::format("{}: missing coefficients", sex));
  for (int k = 0; k < 7; ++k) {
    if (!block.at("coefficients").contains(kTerms[k])) {
      throw Error("coefficients", fmt::format("{}: missing coefficient {}", sex, kTerms[k]));
    }
    *term(s, k) = block.at("coefficients").at(kTerms[k]).get<double>();
  }
  if (!block.contains("baseline_survival_10y")) {
    throw Error("coefficients", fmt::format("{}: missing baseline_survival_10y", sex));
  }
  if (!block.contains("mean_linear_predictor")) {
    throw Error("coefficients", fmt::format("{}: missing mean_linear_predictor", sex));
  }
  s.baseline_survival_10y = block.at("baseline_survival_10y").get<double>();
  s.mean_linear_predictor = block.at("mean_linear_predictor").get<double>();
  return s;
}

double checked_log(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) throw Error("domain", fmt::format("{} must be positive, got {}", field, v));
  return std::log(v);
}

}  // namespace

void CoefficientSet::validate() const {
  for (const auto* s : {&female, &male}) {
    const char* sex = s == &female ? "female" : "male";
    if (!(s->baseline_survival_10y > 0.0 && s->baseline_survival_10y < 1.0)) {
      throw Error("coefficients", fmt::format("{}: baseline_survival_10y must lie in (0, 1)", sex));
    }
    auto copy = *s;
    for (int k = 0; k < 7; ++k) {
      if (!std::isfinite(*term(copy, k))) throw Error("coefficients", fmt::format("{}: {} is not finite", sex, kTerms[k]));
    }
    if (!std::isfinite(s->mean_linear_predictor)) {
      throw Error("coefficients", fmt::format("{}: mean_linear_predictor is not finite", sex));
    }
  }
}

json to_json(const CoefficientSet& c) {
  return {{"provenance", c.provenance}, {"female", sex_json(c.female)}, {"male", sex_json(c.male)}};
}

CoefficientSet coefficients_from_json(const json& doc) {
  try {
    CoefficientSet c;
    c.provenance = doc.value("provenance", std::string{});
    c.female = sex_from_json(doc, "female");
    c.male = sex_from_json(doc, "male");
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error("coefficients", std::string("malformed coefficient file: ") + e.what());
  }
}

CoefficientSet load_coefficients(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", fmt::format("cannot open {}", path.string()));
  try {
    return coefficients_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error("coefficients", fmt::format("{}: {}", path.string(), e.what()));
  }
}

double linear_predictor(const FraminghamInput& in, const CoefficientSet& c) {
  const auto& s = c.for_sex(in.female);
  const double ln_sbp = checked_log(in.sbp, "sbp");
  return s.ln_age * checked_log(in.age, "age") +
         s.ln_total_cholesterol * checked_log(in.total_cholesterol, "total_cholesterol") +
         s.ln_hdl_cholesterol * checked_log(in.hdl_cholesterol, "hdl_cholesterol") +
         (in.sbp_treated ? s.ln_sbp_treated : s.ln_sbp_untreated) * ln_sbp +
         (in.current_smoker ? s.current_smoker : 0.0) + (in.diabetes ? s.diabetes : 0.0);
}

double framingham_risk(const FraminghamInput& in, const CoefficientSet& c) {
  const auto& s = c.for_sex(in.female);
  const double rel = std::exp(linear_predictor(in, c) - s.mean_linear_predictor);
  // 1 - S0^rel, computed without cancellation for small risks
  return -std::expm1(rel * std::log(s.baseline_survival_10y));
}

std::vector<double> framingham_risks(const std::vector<FraminghamInput>& inputs, const CoefficientSet& c) {
  std::vector<double> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) out.push_back(framingham_risk(in, c));
  return out;
}

DerivedInputs derive_framingham_inputs(const cohort::RawCohort& raw, const FieldMap& f) {
  auto column = [&](const std::string& name) -> const cohort::RawColumn& {
    const auto it = raw.columns.find(name);
    if (it == raw.columns.end()) throw Error("schema", fmt::format("framingham input column '{}' not in cohort", name));
    return it->second;
  };
  const auto& sex = column(f.sex);
  const auto& age = column(f.age);
  const auto& tc = column(f.total_cholesterol);
  const auto& hdl = column(f.hdl_cholesterol);
  std::vector<const cohort::RawColumn*> sbp;
  for (const auto& s : f.sbp) sbp.push_back(&column(s));
  if (sbp.empty()) throw Error("schema", "framingham derivation needs at least one SBP column");
  const auto& med = column(f.bp_medication);
  const auto& smoke = column(f.smoking);
  const auto& dm = column(f.diabetes);
  const std::vector<std::optional<double>>* dm_date = nullptr;
  const std::vector<std::optional<double>>* assessed = nullptr;
  if (const auto it = raw.outcome_fields.find(f.diabetes_date); it != raw.outcome_fields.end()) dm_date = &it->second;
  if (const auto it = raw.outcome_fields.find(f.assessment_date); it != raw.outcome_fields.end()) assessed = &it->second;

  DerivedInputs out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::string missing;
    auto need = [&](const cohort::RawColumn& c, const std::string& name) {
      if (c.missing(i) && missing.empty()) missing = name;
    };
    need(sex, f.sex);
    need(age, f.age);
    need(tc, f.total_cholesterol);
    need(hdl, f.hdl_cholesterol);
    for (std::size_t k = 0; k < sbp.size(); ++k) need(*sbp[k], f.sbp[k]);
    need(med, f.bp_medication);
    need(smoke, f.smoking);
    need(dm, f.diabetes);
    if (!missing.empty()) {
      out.excluded.emplace_back(i, "missing " + missing);
      continue;
    }
    FraminghamInput in;
    in.female = *sex.numbers[i] == 1.0;
    in.age = *age.numbers[i];
    const double scale = f.cholesterol_in_mmol ? kMgPerDlPerMmolPerL : 1.0;
    in.total_cholesterol = *tc.numbers[i] * scale;
    in.hdl_cholesterol = *hdl.numbers[i] * scale;
    double sum = 0.0;
    for (const auto* c : sbp) sum += *c->numbers[i];
    in.sbp = sum / static_cast<double>(sbp.size());
    in.sbp_treated = *med.numbers[i] == 1.0;
    in.current_smoker = smoke.is_labelled() ? *smoke.labels[i] == f.current_smoker_label : *smoke.numbers[i] == 1.0;
    in.diabetes = *dm.numbers[i] == 1.0;
    if (dm_date && assessed && (*dm_date)[i] && (*assessed)[i]) {
      // only diagnoses on or before assessment count
      in.diabetes = *(*dm_date)[i] <= *(*assessed)[i];
    }
    out.inputs.push_back(in);
    out.rows.push_back(i);
  }
  return out;
}

std::vector<std::string> refit_columns() { return {std::begin(kTerms), std::end(kTerms)}; }

Matrix refit_design(const std::vector<FraminghamInput>& inputs) {
  Matrix x(inputs.size(), 7);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& in = inputs[i];
    const double ln_sbp = checked_log(in.sbp, "sbp");
    x(i, 0) = checked_log(in.age, "age");
    x(i, 1) = checked_log(in.total_cholesterol, "total_cholesterol");
    x(i, 2) = checked_log(in.hdl_cholesterol, "hdl_cholesterol");
    x(i, 3) = in.sbp_treated ? 0.0 : ln_sbp;
    x(i, 4) = in.sbp_treated ? ln_sbp : 0.0;
    x(i, 5) = in.current_smoker;
    x(i, 6) = in.diabetes;
  }
  return x;
}

RefitResult refit_cox(const std::vector<FraminghamInput>& inputs, const OutcomeColumn& outcome, double horizon) {
  if (inputs.size() != outcome.size()) throw Error("dimension", "inputs and outcome differ in length");
  const auto x = refit_design(inputs);
  RefitResult out;
  out.risks.assign(inputs.size(), 0.0);
  for (bool fem : {true, false}) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i].female == fem) rows.push_back(i);
    }
    if (rows.empty()) throw Error("no_events", fmt::format("no {} subjects to refit", fem ? "female" : "male"));
    auto fit = cox::fit_cox(x.select_rows(rows), outcome.select(rows), {}, refit_columns());
    for (auto i : rows) out.risks[i] = cox::predict_risk(fit, x.row(i), horizon).risk;
    (fem ? out.female : out.male) = std::move(fit);
  }
  return out;
}

ComparisonReport compare_scores(const std::vector<NamedScore>& scores, const std::vector<bool>& female,
                                const OutcomeColumn& outcome) {
  ComparisonReport report;
  for (const auto& s : scores) {
    if (s.risk.size() != outcome.size() || female.size() != outcome.size()) {
      throw Error("dimension", fmt::format("score '{}' is not aligned with the outcome", s.name));
    }
    // pooled = female block followed by male block
    std::vector<double> pooled_risk, pooled_t;
    std::vector<std::uint8_t> pooled_e;
    for (bool fem : {true, false}) {
      std::vector<double> r, t;
      std::vector<std::uint8_t> e;
      for (std::size_t i = 0; i < outcome.size(); ++i) {
        if (female[i] != fem) continue;
        r.push_back(s.risk[i]);
        t.push_back(outcome.duration[i]);
        e.push_back(outcome.event[i]);
      }
      report.rows.push_back({s.name, fem ? "female" : "male", eval::concordance_index(r, t, e), r.size()});
      pooled_risk.insert(pooled_risk.end(), r.begin(), r.end());
      pooled_t.insert(pooled_t.end(), t.begin(), t.end());
      pooled_e.insert(pooled_e.end(), e.begin(), e.end());
    }
    report.rows.push_back({s.name, "all", eval::concordance_index(pooled_risk, pooled_t, pooled_e), pooled_risk.size()});
  }
  return report;
}

json to_json(const ComparisonReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"score", row.score}, {"scope", row.scope}, {"cindex", row.cindex}, {"n", row.n}});
  }
  return {{"rows", rows}};
}

std::string render_comparison(const ComparisonReport& r) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, double>> cells;
  for (const auto& row : r.rows) {
    if (!cells.count(row.score)) order.push_back(row.score);
    cells[row.score][row.scope] = row.cindex;
  }
  std::size_t width = 5;
  for (const auto& s : order) width = std::max(width, s.size());
  std::string out = fmt::format("{:<{}}  {:>7}  {:>7}  {:>7}\n", "Score", width, "Female", "Male", "All");
  for (const auto& s : order) {
    auto cell = [&](const char* scope) {
      const auto it = cells[s].find(scope);
      return it == cells[s].end() ? std::string("-") : fmt::format("{:.3f}", it->second);
    };
    out += fmt::format("{:<{}}  {:>7}  {:>7}  {:>7}\n", s, width, cell("female"), cell("male"), cell("all"));
  }
  return out;
}

}  // namespace survwright::framingham
