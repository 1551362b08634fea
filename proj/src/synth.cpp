#include "survwright/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "survwright/error.hpp"
#include "survwright/stats.hpp"

namespace survwright::synth {

using nlohmann::json;
using cohort::FeatureKind;
using cohort::FeatureSpec;

void GeneratorSpec::validate() const {
  if (n < 1) throw Error("spec", "n must be at least 1");
  if (beta.empty()) throw Error("spec", "beta must have at least one entry");
  if (baseline == Baseline::exponential && !(rate > 0.0)) throw Error("spec", "rate must be positive");
  if (baseline == Baseline::weibull && !(weibull_shape > 0.0 && weibull_scale > 0.0)) {
    throw Error("spec", "weibull shape and scale must be positive");
  }
  if (censor_rate < 0.0) throw Error("spec", "censor_rate must be non-negative");
  if (!correlation.empty()) {
    if (correlation.rows() != beta.size() || correlation.cols() != beta.size()) {
      throw Error("spec", "correlation must be p x p");
    }
    if (!Cholesky::factor(correlation).ok) throw Error("spec", "correlation is not positive definite");
  }
}

json to_json(const GeneratorSpec& spec) {
  json doc{{"n", spec.n},
           {"beta", spec.beta},
           {"baseline", spec.baseline == Baseline::exponential ? "exponential" : "weibull"},
           {"rate", spec.rate},
           {"weibull_shape", spec.weibull_shape},
           {"weibull_scale", spec.weibull_scale},
           {"censor_rate", spec.censor_rate},
           {"admin_time", spec.admin_time},
           {"seed", spec.seed}};
  if (!spec.correlation.empty()) {
    json rows = json::array();
    for (std::size_t r = 0; r < spec.correlation.rows(); ++r) {
      auto row = spec.correlation.row(r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    doc["correlation"] = std::move(rows);
  }
  return doc;
}

GeneratorSpec generator_spec_from_json(const json& doc) {
  GeneratorSpec spec;
  try {
    spec.n = doc.value("n", spec.n);
    spec.beta = doc.at("beta").get<std::vector<double>>();
    const auto baseline = doc.value("baseline", std::string("exponential"));
    if (baseline == "weibull") {
      spec.baseline = Baseline::weibull;
    } else if (baseline != "exponential") {
      throw Error("spec", "unknown baseline '" + baseline + "'");
    }
    spec.rate = doc.value("rate", spec.rate);
    spec.weibull_shape = doc.value("weibull_shape", spec.weibull_shape);
    spec.weibull_scale = doc.value("weibull_scale", spec.weibull_scale);
    spec.censor_rate = doc.value("censor_rate", spec.censor_rate);
    spec.admin_time = doc.value("admin_time", spec.admin_time);
    spec.seed = doc.value("seed", spec.seed);
    if (doc.contains("correlation")) {
      const auto& c = doc.at("correlation");
      spec.correlation = Matrix(c.size(), c.size());
      for (std::size_t r = 0; r < c.size(); ++r) {
        for (std::size_t k = 0; k < c.size(); ++k) spec.correlation(r, k) = c.at(r).at(k).get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw Error("spec", std::string("malformed generator spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

double true_cumhaz(const GeneratorSpec& spec, double t) {
  if (spec.baseline == Baseline::exponential) return spec.rate * t;
  return std::pow(t / spec.weibull_scale, spec.weibull_shape);
}

namespace {

double inverse_cumhaz(const GeneratorSpec& spec, double h) {
  if (spec.baseline == Baseline::exponential) return h / spec.rate;
  return spec.weibull_scale * std::pow(h, 1.0 / spec.weibull_shape);
}

}  // namespace

Generated generate(const GeneratorSpec& spec) {
  spec.validate();
  const std::size_t p = spec.beta.size();
  Rng rng(spec.seed);
  Cholesky chol;
  if (!spec.correlation.empty()) chol = Cholesky::factor(spec.correlation);

  Generated out;
  out.design.values = Matrix(spec.n, p);
  for (std::size_t j = 0; j < p; ++j) {
    out.design.names.push_back(fmt::format("x{}", j));
    out.design.meta.push_back({out.design.names.back(), cohort::Encoding::z_scaled, "", 0.0, 1.0});
  }
  out.outcome.duration.resize(spec.n);
  out.outcome.event.resize(spec.n);
  out.linear_predictor.resize(spec.n);

  std::vector<double> z(p);
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (auto& v : z) v = standard_normal(rng);
    auto x = out.design.values.row(i);
    if (chol.ok) {
      for (std::size_t a = 0; a < p; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b <= a; ++b) s += chol.lower(a, b) * z[b];
        x[a] = s;
      }
    } else {
      std::copy(z.begin(), z.end(), x.begin());
    }
    double eta = 0.0;
    for (std::size_t a = 0; a < p; ++a) eta += x[a] * spec.beta[a];
    out.linear_predictor[i] = eta;

    const double t = inverse_cumhaz(spec, -std::log(uniform_open(rng)) / std::exp(eta));
    double c = spec.admin_time > 0.0 ? spec.admin_time : std::numeric_limits<double>::infinity();
    if (spec.censor_rate > 0.0) c = std::min(c, -std::log(uniform_open(rng)) / spec.censor_rate);
    out.outcome.event[i] = t <= c ? 1 : 0;
    out.outcome.duration[i] = std::min(t, c);
  }
  out.truth = {{"beta", spec.beta}, {"spec", to_json(spec)}, {"events", out.outcome.event_count()}};
  return out;
}

cohort::CohortSchema linear_schema(std::size_t p) {
  cohort::CohortSchema schema;
  for (std::size_t j = 0; j < p; ++j) {
    FeatureSpec f;
    f.name = fmt::format("x{}", j);
    schema.features.push_back(std::move(f));
  }
  schema.outcome.duration_column = "duration";
  schema.outcome.event_column = "event";
  return schema;
}

cohort::RawCohort to_raw(const Generated& data) {
  cohort::RawCohort raw;
  const std::size_t n = data.design.rows();
  for (std::size_t i = 0; i < n; ++i) raw.row_ids.push_back(std::to_string(i + 1));
  for (std::size_t j = 0; j < data.design.cols(); ++j) {
    cohort::RawColumn col;
    col.kind = FeatureKind::continuous;
    for (std::size_t i = 0; i < n; ++i) col.numbers.emplace_back(data.design.values(i, j));
    raw.columns.emplace(data.design.names[j], std::move(col));
  }
  auto& duration = raw.outcome_fields["duration"];
  auto& event = raw.outcome_fields["event"];
  for (std::size_t i = 0; i < n; ++i) {
    duration.emplace_back(data.outcome.duration[i]);
    event.emplace_back(static_cast<double>(data.outcome.event[i]));
  }
  return raw;
}

std::map<std::string, double> CohortTemplate::default_missingness() {
  return {{"total_cholesterol", 0.05}, {"hdl_cholesterol", 0.08}, {"sbp_1", 0.02}, {"sbp_2", 0.02},
          {"heart_rate", 0.03},        {"pack_years", 0.10},      {"walking_pace", 0.02},
          {"waist", 0.01},             {"hip", 0.01},             {"beer", 0.05},
          {"red_wine", 0.05},          {"spirits", 0.05},         {"townsend", 0.01}};
}

namespace {

FeatureSpec feature(std::string name, FeatureKind kind, std::string unit, std::string label,
                    std::vector<std::string> tags = {}, bool model_input = true) {
  FeatureSpec f;
  f.name = std::move(name);
  f.kind = kind;
  f.unit = std::move(unit);
  f.label = std::move(label);
  f.tags = std::move(tags);
  f.model_input = model_input;
  return f;
}

FeatureSpec labelled(std::string name, FeatureKind kind, std::vector<std::string> levels, std::string label,
                     std::vector<std::string> tags = {}) {
  auto f = feature(std::move(name), kind, "", std::move(label), std::move(tags));
  f.categories = std::move(levels);
  return f;
}

FeatureSpec derived(std::string name, cohort::Derivation how, std::vector<std::string> inputs, std::string unit,
                    std::string label, std::vector<std::string> tags = {}) {
  auto f = feature(std::move(name), FeatureKind::derived, std::move(unit), std::move(label), std::move(tags));
  f.derivation = how;
  f.inputs = std::move(inputs);
  return f;
}

double round_to(double x, double step) { return std::round(x / step) * step; }

double bernoulli(Rng& rng, double p) { return uniform01(rng) < p ? 1.0 : 0.0; }

std::size_t pick(Rng& rng, std::initializer_list<double> probs) {
  double u = uniform01(rng);
  std::size_t k = 0;
  for (double p : probs) {
    if (u < p) return k;
    u -= p;
    ++k;
  }
  return k - 1;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

BiobankCohort generate_biobank_cohort(const CohortTemplate& tmpl) {
  if (tmpl.n < 1) throw Error("spec", "n must be at least 1");
  using cohort::Derivation;
  const auto B = FeatureKind::binary;
  const auto C = FeatureKind::continuous;

  BiobankCohort out;
  auto& schema = out.schema;
  schema.features = {
      feature("age", C, "years", "Age at assessment"),
      feature("sex", B, "", "Female", {"sex"}),
      feature("total_cholesterol", C, "mmol/L", "Total cholesterol", {"cholesterol"}, false),
      feature("hdl_cholesterol", C, "mmol/L", "HDL cholesterol", {"cholesterol"}, false),
      derived("cholesterol_ratio", Derivation::ratio, {"total_cholesterol", "hdl_cholesterol"}, "",
              "Cholesterol ratio", {"cholesterol"}),
      feature("sbp_1", C, "mmHg", "Systolic blood pressure", {"sbp"}),
      feature("sbp_2", C, "mmHg", "Systolic blood pressure, second reading", {"sbp"}, false),
      feature("heart_rate", C, "bpm", "Pulse rate", {"heart_rate"}),
      feature("bp_medication", B, "", "Blood pressure medication"),
      labelled("smoking_status", FeatureKind::categorical, {"never", "previous", "current"}, "Smoking status",
               {"modifiable"}),
      feature("pack_years", C, "pack-years", "Pack years of smoking", {"modifiable"}),
      labelled("walking_pace", FeatureKind::ordinal, {"slow", "steady", "brisk"}, "Usual walking pace",
               {"modifiable"}),
      feature("waist", C, "cm", "Waist circumference", {}, false),
      feature("hip", C, "cm", "Hip circumference", {}, false),
      derived("waist_hip_ratio", Derivation::ratio, {"waist", "hip"}, "", "Waist-to-hip ratio"),
      feature("red_wine", C, "glasses/week", "Red wine intake", {"modifiable"}, false),
      feature("beer", C, "pints/week", "Beer and cider intake", {"modifiable"}, false),
      feature("spirits", C, "measures/week", "Spirits intake", {"modifiable"}, false),
      derived("total_alcohol", Derivation::sum, {"red_wine", "beer", "spirits"}, "units/week",
              "Total alcohol intake", {"modifiable"}),
      feature("diabetes", B, "", "Diabetes diagnosed"),
      feature("atrial_fibrillation", B, "", "Atrial fibrillation"),
      labelled("rare_condition", FeatureKind::categorical, {"none", "common", "rare"}, "Rare condition"),
      feature("townsend", C, "", "Townsend deprivation index"),
  };
  for (std::size_t k = 0; k < tmpl.noise_features; ++k) {
    schema.features.push_back(feature(fmt::format("noise_{}", k + 1), C, "", ""));
  }
  // Heart rate stays in the file; apply_variant decides whether it is an input.
  schema.outcome.event_date_columns = {"mi_date", "stroke_date"};
  schema.outcome.assessment_date_column = "assessment_date";
  schema.outcome.death_date_column = "death_date";
  schema.outcome.admin_censor_day = *cohort::parse_day("2020-09-30");
  schema.exclusion_rules = {{"prior_cvd", {"prior_cvd_date"}}};
  schema.date_columns = {"diabetes_date"};
  schema.validate();

  const double hr_age = 0.07, hr_female = -0.45, hr_bpmed = 0.25, hr_current = 0.55, hr_previous = 0.15,
               hr_pack = 0.012, hr_slow = 0.35, hr_brisk = -0.2, hr_whr = 2.0, hr_diabetes = 0.5, hr_af = 0.7,
               hr_common = 0.1, hr_townsend = 0.03;
  out.truth = {{"units", "log hazard per raw unit"},
               {"baseline_rate", tmpl.baseline_rate},
               {"reference", {{"age", 55}, {"cholesterol_ratio", 4.0}, {"sbp_1", 135}, {"waist_hip_ratio", 0.9}}},
               {"effects",
                {{"age", hr_age},
                 {"sex", hr_female},
                 {"cholesterol_ratio", tmpl.cholesterol_effect},
                 {"sbp_1", tmpl.sbp_effect},
                 {"heart_rate", 0.0},
                 {"bp_medication", hr_bpmed},
                 {"smoking_status=current", hr_current},
                 {"smoking_status=previous", hr_previous},
                 {"pack_years", hr_pack},
                 {"walking_pace=slow", hr_slow},
                 {"walking_pace=brisk", hr_brisk},
                 {"waist_hip_ratio", hr_whr},
                 {"total_alcohol", 0.0},
                 {"diabetes", hr_diabetes},
                 {"atrial_fibrillation", hr_af},
                 {"rare_condition=common", hr_common},
                 {"townsend", hr_townsend}}}};

  const std::size_t n = tmpl.n;
  auto& raw = out.raw;
  for (const auto& f : schema.features) {
    if (f.kind == FeatureKind::derived) continue;
    cohort::RawColumn col;
    col.kind = f.kind;
    if (col.is_labelled()) {
      col.labels.resize(n);
    } else {
      col.numbers.resize(n);
    }
    raw.columns.emplace(f.name, std::move(col));
  }
  for (const char* name : {"mi_date", "stroke_date", "assessment_date", "death_date", "prior_cvd_date",
                           "diabetes_date"}) {
    raw.outcome_fields[name].resize(n);
  }
  auto set = [&](const std::string& name, std::size_t i, double v) { raw.columns.at(name).numbers[i] = v; };
  auto set_label = [&](const std::string& name, std::size_t i, const std::string& v) {
    raw.columns.at(name).labels[i] = v;
  };
  auto set_day = [&](const std::string& name, std::size_t i, std::int64_t d) {
    raw.outcome_fields.at(name)[i] = static_cast<double>(d);
  };

  const std::int64_t first_assessment = *cohort::parse_day("2006-03-13");
  const std::int64_t admin = schema.outcome.admin_censor_day;
  const std::vector<std::string> smoking{"never", "previous", "current"};
  const std::vector<std::string> pace{"slow", "steady", "brisk"};
  const std::vector<std::string> rare_levels{"none", "common", "rare"};

  Rng rng(tmpl.seed);
  for (std::size_t i = 0; i < n; ++i) {
    raw.row_ids.push_back(std::to_string(1000001 + i));
    const double age = round_to(40.0 + 30.0 * uniform01(rng), 1.0);
    const double female = bernoulli(rng, 0.54);
    const double tc = std::max(2.5, 5.7 + 1.1 * standard_normal(rng));
    const double hdl = std::max(0.5, (female ? 1.6 : 1.3) + (female ? 0.35 : 0.3) * standard_normal(rng));
    const double sbp_true = 120.0 + 0.5 * (age - 55.0) + 8.0 * (1.0 - female) + 15.0 * standard_normal(rng);
    const double sbp1 = sbp_true + 4.0 * standard_normal(rng);
    const double sbp2 = sbp_true + 4.0 * standard_normal(rng);
    const double heart_rate = 70.0 + 0.3 * (sbp_true - 135.0) + 9.0 * standard_normal(rng);
    const double bpmed = bernoulli(rng, logistic(-2.0 + 0.04 * (sbp_true - 135.0)));
    const std::size_t smoke = pick(rng, {0.55, 0.35, 0.10});
    double pack = 0.0;
    if (smoke == 1) pack = std::abs(15.0 + 10.0 * standard_normal(rng));
    if (smoke == 2) pack = std::abs(25.0 + 12.0 * standard_normal(rng));
    const std::size_t walk = pick(rng, {0.08, 0.53, 0.39});
    const double hip = 103.0 + 8.0 * standard_normal(rng);
    const double waist = 0.85 * hip + 10.0 * (1.0 - female) + 7.0 * standard_normal(rng);
    const double wine = std::max(0.0, std::round(3.0 + 3.0 * standard_normal(rng)));
    const double beer = std::max(0.0, std::round(2.0 + 3.0 * standard_normal(rng)));
    const double spirits = std::max(0.0, std::round(1.0 + 2.0 * standard_normal(rng)));
    const double diabetes = bernoulli(rng, 0.02 + 0.002 * (age - 40.0));
    const double af = bernoulli(rng, 0.02);
    const double u_rare = uniform01(rng);
    const std::size_t rare = u_rare < tmpl.rare_level_prevalence ? 2 : (u_rare < 0.2 ? 1 : 0);
    const double townsend = -1.5 + 3.0 * standard_normal(rng);

    const double tc_r = round_to(tc, 0.01), hdl_r = round_to(hdl, 0.01);
    const double sbp1_r = std::round(sbp1), sbp2_r = std::round(sbp2);
    const double waist_r = std::round(waist), hip_r = std::round(hip);
    set("age", i, age);
    set("sex", i, female);
    set("total_cholesterol", i, tc_r);
    set("hdl_cholesterol", i, hdl_r);
    set("sbp_1", i, sbp1_r);
    set("sbp_2", i, sbp2_r);
    set("heart_rate", i, std::round(heart_rate));
    set("bp_medication", i, bpmed);
    set_label("smoking_status", i, smoking[smoke]);
    set("pack_years", i, round_to(pack, 0.1));
    set_label("walking_pace", i, pace[walk]);
    set("waist", i, waist_r);
    set("hip", i, hip_r);
    set("red_wine", i, wine);
    set("beer", i, beer);
    set("spirits", i, spirits);
    set("diabetes", i, diabetes);
    set("atrial_fibrillation", i, af);
    set_label("rare_condition", i, rare_levels[rare]);
    set("townsend", i, round_to(townsend, 0.01));
    for (std::size_t k = 0; k < tmpl.noise_features; ++k) {
      set(fmt::format("noise_{}", k + 1), i, round_to(standard_normal(rng), 0.001));
    }

    // Hazard on the recorded (rounded) values so the truth matches the file.
    double eta = hr_age * (age - 55.0) + hr_female * female + tmpl.cholesterol_effect * (tc_r / hdl_r - 4.0) +
                 tmpl.sbp_effect * (sbp1_r - 135.0) + hr_bpmed * bpmed + hr_pack * round_to(pack, 0.1) +
                 hr_whr * (waist_r / hip_r - 0.9) + hr_diabetes * diabetes + hr_af * af +
                 hr_townsend * round_to(townsend, 0.01);
    if (smoke == 2) eta += hr_current;
    if (smoke == 1) eta += hr_previous;
    if (walk == 0) eta += hr_slow;
    if (walk == 2) eta += hr_brisk;
    if (rare == 1) eta += hr_common;

    const auto assessment = first_assessment + static_cast<std::int64_t>(uniform01(rng) * 4.0 * 365.25);
    set_day("assessment_date", i, assessment);
    const double t_event = -std::log(uniform_open(rng)) / (tmpl.baseline_rate * std::exp(eta));
    const double t_death = -std::log(uniform_open(rng)) / (tmpl.death_rate * std::exp(0.08 * (age - 55.0)));
    auto to_day = [&](double years) {
      return assessment + std::max<std::int64_t>(1, std::llround(years * cohort::kDaysPerYear));
    };
    const std::int64_t event_day = to_day(t_event);
    const std::int64_t death_day = to_day(t_death);
    const bool mi = uniform01(rng) < 0.6;
    if (event_day < admin && event_day <= death_day) set_day(mi ? "mi_date" : "stroke_date", i, event_day);
    if (death_day < admin) set_day("death_date", i, death_day);

    // Prior disease: half recorded as an exclusion-rule date, half as an
    // outcome date on or before assessment.
    if (uniform01(rng) < tmpl.prior_disease_rate) {
      const auto before = assessment - 1 - static_cast<std::int64_t>(uniform01(rng) * 3000.0);
      set_day(uniform01(rng) < 0.5 ? "prior_cvd_date" : "stroke_date", i, before);
    }
    if (diabetes) {
      set_day("diabetes_date", i, assessment - 1 - static_cast<std::int64_t>(uniform01(rng) * 3000.0));
    } else if (uniform01(rng) < 0.03) {
      // Diagnosed during follow-up; must not count at baseline.
      set_day("diabetes_date", i, assessment + 1 + static_cast<std::int64_t>(uniform01(rng) * 3000.0));
    }
  }

  // MCAR missingness on its own stream so values do not depend on the rates.
  Rng miss(derive_seed(tmpl.seed, 1));
  for (const auto& [name, rate] : tmpl.missingness) {
    auto it = raw.columns.find(name);
    if (it == raw.columns.end()) throw Error("spec", "missingness for unknown feature '" + name + "'");
    if (rate <= 0.0) continue;
    auto& col = it->second;
    for (std::size_t i = 0; i < n; ++i) {
      if (uniform01(miss) >= rate) continue;
      if (col.is_labelled()) {
        col.labels[i].reset();
      } else {
        col.numbers[i].reset();
      }
    }
  }
  return out;
}

}  // namespace survwright::synth
