#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <set>

#include "survwright/error.hpp"
#include "survwright/service.hpp"

namespace survwright::service {

using nlohmann::json;
using cohort::FeatureKind;

ScoreRequest score_request_from_json(const json& doc) {
  if (!doc.is_object()) throw Error("request", "request body must be a JSON object");
  ScoreRequest r;
  try {
    r.model = doc.at("model").get<std::string>();
    if (doc.contains("features")) r.features = doc.at("features");
    if (!r.features.is_object()) throw Error("request", "'features' must be an object");
    r.horizon_years = doc.value("horizon_years", r.horizon_years);
    r.lenient = doc.value("lenient", false);
    if (doc.contains("overrides")) r.overrides = doc.at("overrides");
    if (!r.overrides.is_object()) throw Error("request", "'overrides' must be an object");
  } catch (const json::exception& e) {
    throw Error("request", std::string("invalid request: ") + e.what());
  }
  return r;
}

json to_json(const ScoreResponse& r) {
  json j{{"risk", r.risk},
         {"linear_predictor", r.linear_predictor},
         {"model", r.model_id},
         {"model_version", r.model_version},
         {"variant", r.variant},
         {"extrapolated", r.extrapolated},
         {"flags", r.flags}};
  j["contributions"] = r.contributions ? json(*r.contributions) : json(nullptr);
  return j;
}

json to_json(const WhatIfResponse& r) {
  return {{"base", to_json(r.base)}, {"modified", to_json(r.modified)}, {"delta", r.delta}};
}

namespace {

// One-row raw cohort holding every non-derived schema feature; unsupplied
// values stay missing.
cohort::RawCohort request_row(const cohort::CohortSchema& schema, const json& features,
                              std::vector<std::string>& flags) {
  cohort::RawCohort raw;
  raw.row_ids = {"request"};
  for (const auto& f : schema.features) {
    if (f.kind == FeatureKind::derived) continue;
    cohort::RawColumn col;
    col.kind = f.kind;
    if (col.is_labelled()) {
      col.labels.resize(1);
    } else {
      col.numbers.resize(1);
    }
    raw.columns.emplace(f.name, std::move(col));
  }
  for (const auto& [name, value] : features.items()) {
    const auto it = raw.columns.find(name);
    if (it == raw.columns.end()) {
      flags.push_back("ignored:" + name);
      continue;
    }
    if (value.is_null()) continue;
    auto& col = it->second;
    if (col.is_labelled()) {
      if (!value.is_string()) throw Error("request", fmt::format("feature '{}' expects a category label", name));
      col.labels[0] = value.get<std::string>();
    } else if (value.is_boolean()) {
      col.numbers[0] = value.get<bool>() ? 1.0 : 0.0;
    } else if (value.is_number()) {
      const double v = value.get<double>();
      if (!std::isfinite(v)) throw Error("request", fmt::format("feature '{}' is not finite", name));
      col.numbers[0] = v;
    } else {
      throw Error("request", fmt::format("feature '{}' expects a number", name));
    }
  }
  return raw;
}

}  // namespace

ScoreResponse score(const ModelBundle& bundle, const ScoreRequest& request) {
  if (!(request.horizon_years > 0.0) || !std::isfinite(request.horizon_years)) {
    throw Error("request", "horizon_years must be a positive number");
  }
  ScoreResponse out;
  out.model_id = bundle.id;
  out.model_version = bundle.version;
  out.variant = std::string(cohort::to_string(bundle.variant));
  const auto& pre = bundle.preprocessor;
  auto raw = request_row(pre.schema, request.features, out.flags);

  std::vector<std::string> missing;
  for (const auto& name : pre.required_features()) {
    if (raw.columns.at(name).missing(0)) missing.push_back(name);
  }
  if (!missing.empty()) {
    if (!request.lenient) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw Error("missing_features", "missing required features: " + list);
    }
    for (const auto& m : missing) out.flags.push_back("imputed:" + m);
  }

  const auto design =
      pre.transform(raw, request.lenient ? cohort::UnseenLevel::lenient : cohort::UnseenLevel::strict);
  const auto x = design.values.row(0);
  if (const auto* fit = std::get_if<cox::CoxFit>(&bundle.model)) {
    std::map<std::string, double> contributions;
    double eta = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double c = fit->beta[j] * x[j];
      contributions[design.names[j].substr(0, design.names[j].find('='))] += c;
      eta += c;
    }
    const auto pred = cox::risk_from_cumhaz(fit->baseline_cumhaz, fit->max_time, eta, request.horizon_years);
    out.risk = pred.risk;
    out.extrapolated = pred.extrapolated;
    out.linear_predictor = eta;
    out.contributions = std::move(contributions);
  } else {
    const auto& m = std::get<neural::NeuralCoxModel>(bundle.model);
    out.linear_predictor = neural::log_risk(m, design.values).front();
    const auto pred = cox::risk_from_cumhaz(m.baseline_cumhaz, m.max_time, out.linear_predictor, request.horizon_years);
    out.risk = pred.risk;
    out.extrapolated = pred.extrapolated;
    out.flags.push_back("contributions_unavailable");
  }
  if (out.extrapolated) out.flags.push_back("extrapolated");
  return out;
}

WhatIfResponse whatif(const ModelBundle& bundle, const ScoreRequest& request) {
  const auto& schema = bundle.preprocessor.schema;
  auto modified = request;
  for (const auto& [name, value] : request.overrides.items()) {
    const auto* f = schema.find(name);
    if (!f || f->kind == FeatureKind::derived) {
      throw Error("unknown_feature", fmt::format("override '{}' is not a raw feature of model '{}'", name, bundle.id));
    }
    modified.features[name] = value;
  }
  WhatIfResponse out;
  out.base = score(bundle, request);
  out.modified = score(bundle, modified);
  out.delta = out.modified.risk - out.base.risk;
  return out;
}

void Registry::add(ModelBundle bundle) {
  bundle.validate();
  if (bundles_.count(bundle.id)) throw Error("bundle", fmt::format("duplicate model id '{}'", bundle.id));
  auto id = bundle.id;
  bundles_.emplace(std::move(id), std::make_shared<const ModelBundle>(std::move(bundle)));
}

const ModelBundle& Registry::get(const std::string& id) const {
  const auto it = bundles_.find(id);
  if (it == bundles_.end()) throw Error("unknown_model", fmt::format("no model with id '{}'", id));
  return *it->second;
}

json Registry::list() const {
  json models = json::array();
  for (const auto& [id, b] : bundles_) {
    // form descriptors: one per raw input the model needs
    json fields = json::array();
    for (const auto& name : b->preprocessor.required_features()) {
      const auto& f = b->preprocessor.schema.at(name);
      json field{{"name", f.name},
                 {"kind", cohort::to_string(f.kind)},
                 {"label", f.label.empty() ? f.name : f.label},
                 {"unit", f.unit},
                 {"modifiable", f.has_tag("modifiable")}};
      if (f.is_labelled()) field["options"] = f.categories;
      if (f.kind == FeatureKind::binary) field["options"] = {0, 1};
      fields.push_back(std::move(field));
    }
    models.push_back({{"id", id},
                      {"fields", std::move(fields)},
                      {"version", b->version},
                      {"model_kind", b->model_kind()},
                      {"variant", cohort::to_string(b->variant)},
                      {"sex_scope", cohort::to_string(b->sex_scope)},
                      {"inputs", b->input_columns().size()},
                      {"required_features", b->preprocessor.required_features()}});
  }
  return {{"models", models}};
}

int http_status(const std::string& code) {
  if (code == "parse" || code == "request") return 400;
  if (code == "unknown_model") return 404;
  if (code == "missing_features" || code == "unknown_feature" || code == "unseen_level" || code == "schema" ||
      code == "dimension" || code == "non_finite") {
    return 422;
  }
  return 500;
}

json error_body(const std::string& code, const std::string& message, const json& details) {
  return {{"code", code}, {"message", message}, {"details", details}};
}

namespace {

template <class F>
HttpResult guarded(const std::string& body, F&& f) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    return {400, error_body("parse", "malformed JSON", {{"byte", e.byte}, {"detail", e.what()}}).dump()};
  }
  try {
    return {200, f(doc).dump()};
  } catch (const Error& e) {
    return {http_status(e.code()), error_body(e.code(), e.what()).dump()};
  } catch (const std::exception& e) {
    return {500, error_body("internal", e.what()).dump()};
  }
}

}  // namespace

HttpResult handle_models(const Registry& registry) { return {200, registry.list().dump()}; }

HttpResult handle_score(const Registry& registry, const std::string& body) {
  return guarded(body, [&](const json& doc) {
    const auto req = score_request_from_json(doc);
    return to_json(score(registry.get(req.model), req));
  });
}

HttpResult handle_whatif(const Registry& registry, const std::string& body) {
  return guarded(body, [&](const json& doc) {
    const auto req = score_request_from_json(doc);
    return to_json(whatif(registry.get(req.model), req));
  });
}

}  // namespace survwright::service
