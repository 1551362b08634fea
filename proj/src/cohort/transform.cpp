#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "survwright/cohort.hpp"
#include "survwright/error.hpp"

namespace survwright::cohort {

using nlohmann::json;

RawCohort derive_features(const RawCohort& raw, const CohortSchema& schema, QualityReport* report) {
  RawCohort out = raw;
  const std::size_t n = raw.size();
  for (const auto& f : schema.features) {
    if (f.kind != FeatureKind::derived) continue;
    std::vector<const std::vector<std::optional<double>>*> inputs;
    for (const auto& in : f.inputs) {
      auto it = out.columns.find(in);
      if (it == out.columns.end()) {
        throw Error("schema", "derived feature '" + f.name + "' input '" + in + "' not loaded");
      }
      inputs.push_back(&it->second.numbers);
    }
    RawColumn col;
    col.kind = FeatureKind::derived;
    col.numbers.resize(n);
    std::size_t zero_denominators = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bool any_missing = false;
      for (const auto* in : inputs) any_missing = any_missing || !(*in)[i].has_value();
      if (any_missing) continue;
      if (f.derivation == Derivation::ratio) {
        const double den = *(*inputs[1])[i];
        if (den == 0.0) {
          ++zero_denominators;
          continue;
        }
        col.numbers[i] = *(*inputs[0])[i] / den;
      } else {
        double s = 0.0;
        for (const auto* in : inputs) s += *(*in)[i];
        col.numbers[i] = s;
      }
    }
    if (report && zero_denominators > 0) report->zero_denominator[f.name] += zero_denominators;
    out.columns[f.name] = std::move(col);
  }
  return out;
}

json to_json(const ImputationStats& stats) {
  return {{"numeric_fill", stats.numeric_fill}, {"label_fill", stats.label_fill}};
}

ImputationStats imputation_from_json(const json& doc) {
  ImputationStats s;
  s.numeric_fill = doc.at("numeric_fill").get<std::map<std::string, double>>();
  s.label_fill = doc.at("label_fill").get<std::map<std::string, std::string>>();
  return s;
}

ImputationStats fit_imputation(const RawCohort& stats_source, const CohortSchema& schema) {
  ImputationStats stats;
  for (const auto& f : schema.features) {
    auto it = stats_source.columns.find(f.name);
    if (it == stats_source.columns.end()) continue;
    const auto& col = it->second;
    if (col.is_labelled()) {
      std::map<std::string, std::size_t> counts;
      for (const auto& v : col.labels) {
        if (v) ++counts[*v];
      }
      if (counts.empty()) throw Error("imputation", "column '" + f.name + "' has no observed values");
      // Mode; ties resolved by schema category order, then lexicographically.
      std::string best;
      std::size_t best_count = 0;
      for (const auto& level : f.categories) {
        auto c = counts.find(level);
        if (c != counts.end() && c->second > best_count) {
          best = level;
          best_count = c->second;
        }
      }
      for (const auto& [level, c] : counts) {
        if (c > best_count) {
          best = level;
          best_count = c;
        }
      }
      stats.label_fill[f.name] = best;
    } else if (f.kind == FeatureKind::binary) {
      std::size_t ones = 0, zeros = 0;
      for (const auto& v : col.numbers) {
        if (v) (*v == 1.0 ? ones : zeros)++;
      }
      if (ones + zeros == 0) throw Error("imputation", "column '" + f.name + "' has no observed values");
      stats.numeric_fill[f.name] = ones > zeros ? 1.0 : 0.0;
    } else {
      double s = 0.0;
      std::size_t k = 0;
      for (const auto& v : col.numbers) {
        if (v) {
          s += *v;
          ++k;
        }
      }
      if (k == 0) throw Error("imputation", "column '" + f.name + "' has no observed values");
      stats.numeric_fill[f.name] = s / static_cast<double>(k);
    }
  }
  return stats;
}

RawCohort apply_imputation(const RawCohort& raw, const ImputationStats& stats) {
  RawCohort out = raw;
  for (auto& [name, col] : out.columns) {
    if (col.is_labelled()) {
      auto it = stats.label_fill.find(name);
      if (it == stats.label_fill.end()) continue;
      for (auto& v : col.labels) {
        if (!v) v = it->second;
      }
    } else {
      auto it = stats.numeric_fill.find(name);
      if (it == stats.numeric_fill.end()) continue;
      for (auto& v : col.numbers) {
        if (!v) v = it->second;
      }
    }
  }
  return out;
}

RawCohort impute_mean(const RawCohort& raw, const RawCohort& stats_source, const CohortSchema& schema) {
  return apply_imputation(raw, fit_imputation(stats_source, schema));
}

std::optional<std::size_t> DesignMatrix::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return j;
  }
  return std::nullopt;
}

DesignMatrix DesignMatrix::select_rows(std::span<const std::size_t> rows) const {
  return {values.select_rows(rows), names, meta};
}

DesignMatrix DesignMatrix::select_columns(std::span<const std::string> keep) const {
  std::vector<std::size_t> idx;
  DesignMatrix out;
  for (const auto& name : keep) {
    auto j = index_of(name);
    if (!j) throw Error("schema", "design has no column '" + name + "'");
    idx.push_back(*j);
    out.names.push_back(names[*j]);
    out.meta.push_back(meta[*j]);
  }
  out.values = values.select_cols(idx);
  return out;
}

json to_json(const EncodingStats& stats) {
  json scaling = json::object();
  for (const auto& [name, s] : stats.scaling) scaling[name] = {{"mean", s.mean}, {"sd", s.sd}};
  return {{"scaling", std::move(scaling)}};
}

EncodingStats encoding_from_json(const json& doc) {
  EncodingStats stats;
  for (const auto& [name, s] : doc.at("scaling").items()) {
    stats.scaling[name] = {s.at("mean").get<double>(), s.at("sd").get<double>()};
  }
  return stats;
}

namespace {

bool is_scaled(const FeatureSpec& f) {
  return f.kind == FeatureKind::continuous || f.kind == FeatureKind::derived;
}

ScaleStats population_stats(const std::vector<std::optional<double>>& values) {
  double s = 0.0;
  std::size_t k = 0;
  for (const auto& v : values) {
    if (v) {
      s += *v;
      ++k;
    }
  }
  ScaleStats out;
  if (k == 0) return out;
  out.mean = s / static_cast<double>(k);
  double ss = 0.0;
  for (const auto& v : values) {
    if (v) ss += (*v - out.mean) * (*v - out.mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(k));
  // A constant column keeps sd 1 so it encodes to zeros instead of NaN.
  out.sd = sd > 0.0 ? sd : 1.0;
  return out;
}

}  // namespace

EncodingStats fit_encoding(const RawCohort& raw, const CohortSchema& schema) {
  EncodingStats stats;
  for (const auto& f : schema.features) {
    if (!is_scaled(f)) continue;
    auto it = raw.columns.find(f.name);
    if (it == raw.columns.end()) continue;
    stats.scaling[f.name] = population_stats(it->second.numbers);
  }
  return stats;
}

DesignMatrix encode(const RawCohort& raw, const CohortSchema& schema, const EncodingStats* fit_stats,
                    UnseenLevel policy) {
  DesignMatrix out;
  struct Source {
    const FeatureSpec* spec;
    const RawColumn* column;
    std::size_t first_col;
    ScaleStats scale;
  };
  std::vector<Source> sources;
  for (const auto& f : schema.features) {
    if (!f.model_input) continue;
    auto it = raw.columns.find(f.name);
    if (it == raw.columns.end()) throw Error("schema", "cohort has no column '" + f.name + "'");
    const auto& col = it->second;
    if (col.missing_count() > 0) {
      throw Error("missing", "column '" + f.name + "' has missing values; impute before encoding");
    }
    Source src{&f, &col, out.names.size(), {}};
    if (f.is_labelled()) {
      for (const auto& level : f.categories) {
        out.names.push_back(f.name + "=" + level);
        out.meta.push_back({f.name, Encoding::one_hot, level, 0.0, 1.0});
      }
    } else if (f.kind == FeatureKind::binary) {
      out.names.push_back(f.name);
      out.meta.push_back({f.name, Encoding::binary, {}, 0.0, 1.0});
    } else {
      if (fit_stats) {
        auto s = fit_stats->scaling.find(f.name);
        if (s == fit_stats->scaling.end()) {
          throw Error("schema", "encoding statistics lack column '" + f.name + "'");
        }
        src.scale = s->second;
      } else {
        src.scale = population_stats(col.numbers);
      }
      out.names.push_back(f.name);
      out.meta.push_back({f.name, Encoding::z_scaled, {}, src.scale.mean, src.scale.sd});
    }
    sources.push_back(src);
  }

  const std::size_t n = raw.size();
  out.values = Matrix(n, out.names.size());
  for (const auto& src : sources) {
    const auto& f = *src.spec;
    if (f.is_labelled()) {
      std::map<std::string, std::size_t> level_index;
      for (std::size_t k = 0; k < f.categories.size(); ++k) level_index[f.categories[k]] = k;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& label = *src.column->labels[i];
        auto it = level_index.find(label);
        if (it == level_index.end()) {
          if (policy == UnseenLevel::strict) {
            throw Error("unseen_level", "column '" + f.name + "' has unseen level '" + label + "'");
          }
          continue;
        }
        out.values(i, src.first_col + it->second) = 1.0;
      }
    } else if (f.kind == FeatureKind::binary) {
      for (std::size_t i = 0; i < n; ++i) {
        const double v = *src.column->numbers[i];
        if (v != 0.0 && v != 1.0) {
          throw Error("schema", "binary column '" + f.name + "' holds non-binary value");
        }
        out.values(i, src.first_col) = v;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const double v = (*src.column->numbers[i] - src.scale.mean) / src.scale.sd;
        if (!std::isfinite(v)) throw Error("schema", "column '" + f.name + "' encodes to non-finite");
        out.values(i, src.first_col) = v;
      }
    }
  }
  return out;
}

DesignMatrix prune_rare(const DesignMatrix& design, double min_prevalence, std::vector<std::string>* dropped) {
  std::vector<std::string> keep;
  const auto n = static_cast<double>(design.rows());
  for (std::size_t j = 0; j < design.cols(); ++j) {
    if (design.meta[j].encoding == Encoding::z_scaled || design.rows() == 0) {
      keep.push_back(design.names[j]);
      continue;
    }
    double ones = 0.0;
    for (std::size_t i = 0; i < design.rows(); ++i) ones += design.values(i, j) == 1.0 ? 1.0 : 0.0;
    if (ones / n < min_prevalence) {
      if (dropped) dropped->push_back(design.names[j]);
    } else {
      keep.push_back(design.names[j]);
    }
  }
  return design.select_columns(keep);
}

}  // namespace survwright::cohort
