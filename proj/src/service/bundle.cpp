#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>

#include "survwright/error.hpp"
#include "survwright/service.hpp"

namespace survwright::service {

using nlohmann::json;

const std::vector<std::string>& ModelBundle::input_columns() const {
  if (const auto* fit = std::get_if<cox::CoxFit>(&model)) return fit->column_names;
  return std::get<neural::NeuralCoxModel>(model).input_columns;
}

void ModelBundle::validate() const {
  if (id.empty()) throw Error("bundle", "bundle id is empty");
  const auto& cols = input_columns();
  if (cols != preprocessor.columns) {
    throw Error("bundle", fmt::format("model inputs ({} columns) do not match the preprocessing columns ({})",
                                      cols.size(), preprocessor.columns.size()));
  }
  if (const auto* fit = std::get_if<cox::CoxFit>(&model)) {
    if (fit->beta.size() != cols.size()) throw Error("bundle", "coefficient count does not match the columns");
  } else if (std::get<neural::NeuralCoxModel>(model).input_width() != cols.size()) {
    throw Error("bundle", "network input width does not match the columns");
  }
  // encoding statistics must cover the scaled inputs and nothing else
  std::set<std::string> used;
  for (const auto& c : cols) used.insert(c.substr(0, c.find('=')));
  for (const auto& [name, stats] : preprocessor.encoding.scaling) {
    if (!used.count(name)) throw Error("bundle", fmt::format("encoding statistics for unused column '{}'", name));
  }
  for (const auto& name : used) {
    const auto* f = preprocessor.schema.find(name);
    if (!f) throw Error("bundle", fmt::format("column '{}' is not in the schema", name));
    const bool scaled = f->kind == cohort::FeatureKind::continuous || f->kind == cohort::FeatureKind::derived;
    if (scaled && !preprocessor.encoding.scaling.count(name)) {
      throw Error("bundle", fmt::format("no encoding statistics for '{}'", name));
    }
  }
  cohort::check_variant(preprocessor.schema, cols, variant);
}

json serialize_model(const ModelBundle& b) {
  b.validate();
  json model = b.is_cox() ? cox::to_json(std::get<cox::CoxFit>(b.model))
                          : neural::to_json(std::get<neural::NeuralCoxModel>(b.model));
  return {{"bundle_version", kBundleVersion},
          {"id", b.id},
          {"version", b.version},
          {"created_at", b.created_at},
          {"variant", cohort::to_string(b.variant)},
          {"sex_scope", cohort::to_string(b.sex_scope)},
          {"model_kind", b.model_kind()},
          {"preprocessor", cohort::to_json(b.preprocessor)},
          {"model", std::move(model)},
          {"metadata", b.metadata}};
}

ModelBundle deserialize_model(const json& doc) {
  if (!doc.is_object() || !doc.contains("bundle_version")) {
    throw Error("bundle_version", "document has no bundle_version; not a model bundle");
  }
  const auto version = doc.at("bundle_version");
  if (!version.is_number_integer() || version.get<int>() != kBundleVersion) {
    throw Error("bundle_version", fmt::format("bundle_version {} is not supported (this build reads {}); "
                                              "re-export the model with a matching release",
                                              version.dump(), kBundleVersion));
  }
  try {
    ModelBundle b;
    b.id = doc.at("id").get<std::string>();
    b.version = doc.value("version", std::string{});
    b.created_at = doc.value("created_at", std::string{});
    b.variant = cohort::parse_variant(doc.at("variant").get<std::string>());
    b.sex_scope = cohort::parse_sex_scope(doc.at("sex_scope").get<std::string>());
    b.preprocessor = cohort::preprocessor_from_json(doc.at("preprocessor"));
    const auto& model = doc.at("model");
    const auto kind = model.value("model_kind", std::string{});
    if (kind == "cox") {
      b.model = cox::cox_fit_from_json(model);
    } else if (kind == "neural_cox") {
      b.model = neural::neural_model_from_json(model);
    } else {
      throw Error("bundle", fmt::format("unknown model_kind '{}'", kind));
    }
    b.metadata = doc.value("metadata", json::object());
    b.validate();
    return b;
  } catch (const json::exception& e) {
    throw Error("bundle", std::string("malformed bundle: ") + e.what());
  }
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("io", fmt::format("cannot write {}", path.string()));
  out << serialize_model(bundle).dump(1) << '\n';
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", fmt::format("cannot open {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw Error("parse", fmt::format("{}: parse error at byte {}: {}", path.string(), e.byte, e.what()));
  }
  return deserialize_model(doc);
}

std::vector<double> bundle_log_risk(const ModelBundle& bundle, const Matrix& x) {
  if (const auto* fit = std::get_if<cox::CoxFit>(&bundle.model)) return multiply(x, fit->beta);
  return neural::log_risk(std::get<neural::NeuralCoxModel>(bundle.model), x);
}

std::vector<double> bundle_predict_risk(const ModelBundle& bundle, const Matrix& x, double horizon) {
  const auto eta = bundle_log_risk(bundle, x);
  const auto baseline = [&]() -> std::pair<const cox::StepFunction*, double> {
    if (const auto* fit = std::get_if<cox::CoxFit>(&bundle.model)) return {&fit->baseline_cumhaz, fit->max_time};
    const auto& m = std::get<neural::NeuralCoxModel>(bundle.model);
    return {&m.baseline_cumhaz, m.max_time};
  }();
  std::vector<double> out;
  out.reserve(eta.size());
  for (double e : eta) out.push_back(cox::risk_from_cumhaz(*baseline.first, baseline.second, e, horizon).risk);
  return out;
}

}  // namespace survwright::service
