#include "survwright/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <istream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <spdlog/spdlog.h>

#include "survwright/cox.hpp"
#include "survwright/error.hpp"
#include "survwright/eval.hpp"

namespace survwright::selection {

using nlohmann::json;

namespace {

double validation_cindex(const cox::CoxFit& fit, const DesignMatrix& validation, const OutcomeColumn& outcome) {
  const auto eta = multiply(validation.values, fit.beta);
  return eval::concordance_index(eta, outcome.duration, outcome.event);
}

}  // namespace

FilterResult univariate_filter(const DesignMatrix& design, const OutcomeColumn& outcome, double alpha) {
  FilterResult out;
  out.stage.stage = "univariate";
  for (std::size_t j = 0; j < design.cols(); ++j) {
    const auto& name = design.names[j];
    const std::size_t col[] = {j};
    std::optional<double> p;
    try {
      const auto fit = cox::fit_cox(design.values.select_cols(col), outcome);
      const auto row = cox::summary_row(name, fit.beta[0], fit.standard_errors()[0]);
      if (std::isfinite(row.p_value)) p = row.p_value;
    } catch (const Error& e) {
      spdlog::debug("univariate fit for '{}' failed: {}", name, e.what());
    }
    out.stage.p_values[name] = p;
    if (!p) {
      out.stage.removed.push_back(name);
      out.stage.reasons[name] = "degenerate";
    } else if (*p > alpha) {
      out.stage.removed.push_back(name);
      out.stage.reasons[name] = fmt::format("p={:.4g} > {}", *p, alpha);
    } else {
      out.retained.push_back(name);
    }
  }
  spdlog::info("univariate filter: {} -> {} features", design.cols(), out.retained.size());
  return out;
}

FilterResult backward_eliminate(const DesignMatrix& train, const OutcomeColumn& train_outcome,
                                const DesignMatrix& validation, const OutcomeColumn& validation_outcome, double tol,
                                std::size_t initial_batch) {
  if (train.cols() < 2) throw Error("config", "backward elimination needs at least two features");
  if (train.names != validation.names) throw Error("schema", "train and validation columns differ");
  FilterResult out;
  out.stage.stage = "backward";
  std::vector<std::string> current = train.names;

  auto fit_on = [&](const std::vector<std::string>& names) {
    return cox::fit_cox(train.select_columns(names), train_outcome);
  };
  auto current_fit = fit_on(current);
  double current_c = validation_cindex(current_fit, validation.select_columns(current), validation_outcome);
  out.stage.cindex_before = current_c;
  std::size_t batch = initial_batch ? initial_batch : std::max<std::size_t>(1, current.size() / 8);

  while (current.size() > 1) {
    batch = std::min(batch, current.size() - 1);
    // weakest first by Wald |z|; ties keep column order
    const auto se = current_fit.standard_errors();
    std::vector<std::size_t> order(current.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> z(current.size());
    for (std::size_t j = 0; j < current.size(); ++j) z[j] = std::abs(current_fit.beta[j] / se[j]);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return z[a] < z[b]; });

    EliminationStep step;
    step.batch_size = batch;
    step.cindex_before = current_c;
    std::set<std::size_t> drop(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(batch));
    std::vector<std::string> trial;
    for (std::size_t j = 0; j < current.size(); ++j) {
      (drop.count(j) ? step.candidates : trial).push_back(current[j]);
    }
    std::optional<cox::CoxFit> trial_fit;
    try {
      trial_fit = fit_on(trial);
      step.cindex_after = validation_cindex(*trial_fit, validation.select_columns(trial), validation_outcome);
    } catch (const Error& e) {
      step.note = e.what();
    }
    step.committed = step.cindex_after && current_c - *step.cindex_after < tol;
    spdlog::debug("backward: batch {} -> c {:.5f} ({})", batch, step.cindex_after.value_or(NAN),
                  step.committed ? "commit" : "reject");
    if (step.committed) {
      for (const auto& name : step.candidates) {
        out.stage.removed.push_back(name);
        out.stage.reasons[name] = fmt::format("c-index {:.5f} -> {:.5f}", current_c, *step.cindex_after);
      }
      current = std::move(trial);
      current_fit = std::move(*trial_fit);
      current_c = *step.cindex_after;
      out.stage.steps.push_back(std::move(step));
    } else {
      out.stage.steps.push_back(std::move(step));
      if (batch == 1) break;
      batch /= 2;
    }
  }
  out.stage.cindex_after = current_c;
  out.retained = std::move(current);
  spdlog::info("backward elimination: {} -> {} features", train.cols(), out.retained.size());
  return out;
}

FilterResult apply_exclusion_list(const std::vector<std::string>& features, const std::vector<std::string>& exclusions) {
  FilterResult out;
  out.stage.stage = "exclusion";
  const std::set<std::string> present(features.begin(), features.end());
  std::set<std::string> listed;
  for (const auto& name : exclusions) {
    if (!present.count(name)) {
      spdlog::warn("exclusion list: '{}' is not in the feature set", name);
    } else {
      listed.insert(name);
    }
  }
  for (const auto& f : features) {
    if (listed.count(f)) {
      out.stage.removed.push_back(f);
      out.stage.reasons[f] = "excluded";
    } else {
      out.retained.push_back(f);
    }
  }
  return out;
}

std::vector<std::string> read_exclusion_list(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

SelectionTrace select_features(const DesignMatrix& train, const OutcomeColumn& train_outcome,
                               const DesignMatrix& validation, const OutcomeColumn& validation_outcome,
                               const SelectionOptions& options) {
  SelectionTrace trace;
  trace.initial = train.names;
  auto uni = univariate_filter(train, train_outcome, options.alpha);
  trace.stages.push_back(std::move(uni.stage));
  std::vector<std::string> current = std::move(uni.retained);
  if (current.size() >= 2) {
    auto back = backward_eliminate(train.select_columns(current), train_outcome, validation.select_columns(current),
                                   validation_outcome, options.cindex_tol, options.initial_batch);
    trace.stages.push_back(std::move(back.stage));
    current = std::move(back.retained);
  }
  auto excl = apply_exclusion_list(current, options.exclusions);
  trace.stages.push_back(std::move(excl.stage));
  trace.final_features = std::move(excl.retained);
  return trace;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt(const json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

}  // namespace

json to_json(const SelectionTrace& trace) {
  json stages = json::array();
  for (const auto& s : trace.stages) {
    json j{{"stage", s.stage},
           {"removed", s.removed},
           {"cindex_before", opt(s.cindex_before)},
           {"cindex_after", opt(s.cindex_after)},
           {"reasons", s.reasons}};
    if (!s.p_values.empty()) {
      json p = json::object();
      for (const auto& [k, v] : s.p_values) p[k] = opt(v);
      j["p_values"] = std::move(p);
    }
    if (!s.steps.empty()) {
      json steps = json::array();
      for (const auto& st : s.steps) {
        steps.push_back({{"batch_size", st.batch_size},
                         {"candidates", st.candidates},
                         {"cindex_before", st.cindex_before},
                         {"cindex_after", opt(st.cindex_after)},
                         {"committed", st.committed},
                         {"note", st.note}});
      }
      j["steps"] = std::move(steps);
    }
    stages.push_back(std::move(j));
  }
  return {{"initial", trace.initial},
          {"stages", std::move(stages)},
          {"final", trace.final_features},
          {"summary", render_pipeline(trace)}};
}

SelectionTrace selection_trace_from_json(const json& doc) {
  try {
    SelectionTrace t;
    t.initial = doc.at("initial").get<std::vector<std::string>>();
    t.final_features = doc.at("final").get<std::vector<std::string>>();
    for (const auto& j : doc.at("stages")) {
      StageRecord s;
      s.stage = j.at("stage").get<std::string>();
      s.removed = j.at("removed").get<std::vector<std::string>>();
      s.cindex_before = opt(j.at("cindex_before"));
      s.cindex_after = opt(j.at("cindex_after"));
      s.reasons = j.at("reasons").get<std::map<std::string, std::string>>();
      if (j.contains("p_values")) {
        for (const auto& [k, v] : j.at("p_values").items()) s.p_values[k] = opt(v);
      }
      if (j.contains("steps")) {
        for (const auto& st : j.at("steps")) {
          EliminationStep e;
          e.batch_size = st.at("batch_size").get<std::size_t>();
          e.candidates = st.at("candidates").get<std::vector<std::string>>();
          e.cindex_before = st.at("cindex_before").get<double>();
          e.cindex_after = opt(st.at("cindex_after"));
          e.committed = st.at("committed").get<bool>();
          e.note = st.value("note", std::string{});
          s.steps.push_back(std::move(e));
        }
      }
      t.stages.push_back(std::move(s));
    }
    return t;
  } catch (const json::exception& e) {
    throw Error("parse", std::string("malformed selection trace: ") + e.what());
  }
}

std::string render_pipeline(const SelectionTrace& trace) {
  std::string out = std::to_string(trace.initial.size());
  for (const auto& s : trace.stages) {
    if (s.stage == "exclusion" && s.removed.empty()) continue;
    out += fmt::format(" -> (-{} {})", s.removed.size(), s.stage);
  }
  return out + fmt::format(" -> {}", trace.final_features.size());
}

}  // namespace survwright::selection
