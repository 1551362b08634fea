#include <algorithm>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "survwright/cohort.hpp"
#include "survwright/error.hpp"

namespace survwright::cohort {

using nlohmann::json;

Preprocessor Preprocessor::fit(const RawCohort& train_raw, const CohortSchema& schema, double min_prevalence) {
  Preprocessor pre;
  pre.schema = schema;
  const auto derived = derive_features(train_raw, schema);
  pre.imputation = fit_imputation(derived, schema);
  const auto imputed = apply_imputation(derived, pre.imputation);
  pre.encoding = fit_encoding(imputed, schema);
  const auto design = encode(imputed, schema, &pre.encoding);
  const auto pruned = prune_rare(design, min_prevalence, &pre.dropped_rare);
  pre.columns = pruned.names;
  pre.restrict_columns(pre.columns);
  return pre;
}

DesignMatrix Preprocessor::transform(const RawCohort& raw, UnseenLevel policy) const {
  const auto derived = derive_features(raw, schema);
  const auto imputed = apply_imputation(derived, imputation);
  return encode(imputed, schema, &encoding, policy).select_columns(columns);
}

void Preprocessor::restrict_columns(std::span<const std::string> keep) {
  std::vector<std::string> next;
  for (const auto& c : keep) {
    if (std::find(columns.begin(), columns.end(), c) == columns.end()) {
      throw Error("schema", "column '" + c + "' is not produced by this preprocessor");
    }
    next.push_back(c);
  }
  columns = std::move(next);

  std::set<std::string> used;
  for (const auto& c : columns) used.insert(c.substr(0, c.find('=')));
  for (auto& f : schema.features) {
    if (f.model_input && !used.count(f.name)) f.model_input = false;
  }
  for (auto it = encoding.scaling.begin(); it != encoding.scaling.end();) {
    it = used.count(it->first) ? std::next(it) : encoding.scaling.erase(it);
  }

  // Imputation values are kept for everything the remaining columns read.
  std::set<std::string> needed(used);
  for (const auto& name : required_features()) needed.insert(name);
  for (auto it = imputation.numeric_fill.begin(); it != imputation.numeric_fill.end();) {
    it = needed.count(it->first) ? std::next(it) : imputation.numeric_fill.erase(it);
  }
  for (auto it = imputation.label_fill.begin(); it != imputation.label_fill.end();) {
    it = needed.count(it->first) ? std::next(it) : imputation.label_fill.erase(it);
  }
}

std::vector<std::string> Preprocessor::required_features() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::vector<std::string> stack;
  for (const auto& f : schema.features) {
    if (f.model_input) stack.push_back(f.name);
  }
  while (!stack.empty()) {
    auto name = stack.back();
    stack.pop_back();
    if (!seen.insert(name).second) continue;
    const auto& f = schema.at(name);
    if (f.kind == FeatureKind::derived) {
      stack.insert(stack.end(), f.inputs.begin(), f.inputs.end());
    } else {
      out.push_back(name);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

json to_json(const Preprocessor& pre) {
  return {{"schema", to_json(pre.schema)},
          {"imputation", to_json(pre.imputation)},
          {"encoding", to_json(pre.encoding)},
          {"columns", pre.columns},
          {"dropped_rare", pre.dropped_rare}};
}

Preprocessor preprocessor_from_json(const json& doc) {
  Preprocessor pre;
  pre.schema = schema_from_json(doc.at("schema"));
  pre.imputation = imputation_from_json(doc.at("imputation"));
  pre.encoding = encoding_from_json(doc.at("encoding"));
  pre.columns = doc.at("columns").get<std::vector<std::string>>();
  pre.dropped_rare = doc.value("dropped_rare", std::vector<std::string>{});
  return pre;
}

}  // namespace survwright::cohort
