#include "survwright/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <set>
#include <spdlog/spdlog.h>

#include "survwright/cox.hpp"
#include "survwright/error.hpp"

namespace survwright::pipeline {

std::string_view to_string(ModelKind k) { return k == ModelKind::cox ? "cox" : "deepsurv"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text == "cox") return ModelKind::cox;
  if (text == "deepsurv" || text == "neural_cox") return ModelKind::deepsurv;
  throw Error("config", fmt::format("unknown model '{}' (expected cox or deepsurv)", text));
}

Prepared prepare(const cohort::RawCohort& raw, const cohort::CohortSchema& schema, cohort::Variant variant,
                 cohort::SexScope scope, std::uint64_t seed) {
  Prepared p;
  p.schema = cohort::apply_sex_scope(cohort::apply_variant(schema, variant), scope);
  const auto rows = cohort::rows_for_sex(raw, schema, scope);
  const auto scoped = raw.select_rows(rows);
  auto built = cohort::extract_outcome(scoped, p.schema, &p.quality);
  p.raw = scoped.select_rows(built.kept);
  p.outcome = std::move(built.outcome);
  if (p.outcome.event_count() == 0) throw Error("no_events", "no events after scoping and exclusions");
  auto split = cohort::stratified_split(p.outcome, kTrainFraction, seed);
  p.train = std::move(split.first);
  p.test = std::move(split.second);
  return p;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(const Prepared& p, std::uint64_t seed) {
  const auto inner = cohort::stratified_split(p.outcome.select(p.train), kTrainFraction, derive_seed(seed, 1));
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (auto i : inner.first) out.first.push_back(p.train[i]);
  for (auto i : inner.second) out.second.push_back(p.train[i]);
  return out;
}

namespace {

std::string now_iso() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
}

// Selected columns that survive this variant's preprocessing, plus heart rate
// for the digital variant.
std::vector<std::string> keep_columns(const cohort::Preprocessor& pre, const TrainConfig& config) {
  if (config.features.empty()) return pre.columns;
  std::set<std::string> wanted(config.features.begin(), config.features.end());
  std::vector<std::string> keep;
  for (const auto& c : pre.columns) {
    const auto feature = c.substr(0, c.find('='));
    const auto* f = pre.schema.find(feature);
    const bool heart_rate = config.variant == cohort::Variant::digital && f && f->has_tag("heart_rate");
    if (wanted.count(c) || heart_rate) keep.push_back(c);
  }
  for (const auto& w : config.features) {
    if (std::find(pre.columns.begin(), pre.columns.end(), w) == pre.columns.end()) {
      spdlog::info("selected column '{}' is not available for variant {} / scope {}", w, cohort::to_string(config.variant),
                   cohort::to_string(config.scope));
    }
  }
  if (keep.empty()) throw Error("config", "no selected column is available for this variant");
  return keep;
}

}  // namespace

eval::EvalReport evaluate_bundle(const service::ModelBundle& bundle, const cohort::RawCohort& raw,
                                 const cohort::OutcomeColumn& outcome, const eval::EvalOptions& options) {
  const auto x = bundle.preprocessor.transform(raw);
  const auto score = service::bundle_log_risk(bundle, x.values);
  const auto risk = service::bundle_predict_risk(bundle, x.values, options.horizon);
  return eval::evaluate(score, risk, outcome.duration, outcome.event, options);
}

TrainResult train_bundle(const cohort::RawCohort& raw, const cohort::CohortSchema& schema, const TrainConfig& config) {
  const auto p = prepare(raw, schema, config.variant, config.scope, config.seed);
  const auto train_raw = p.raw.select_rows(p.train);
  const auto ytrain = p.outcome.select(p.train);

  auto pre = cohort::Preprocessor::fit(train_raw, p.schema, config.min_prevalence);
  pre.restrict_columns(keep_columns(pre, config));
  cohort::check_variant(pre.schema, pre.columns, config.variant);

  TrainResult out;
  auto& b = out.bundle;
  b.id = config.id.empty() ? fmt::format("{}-{}-{}", to_string(config.kind), cohort::to_string(config.variant),
                                         cohort::to_string(config.scope))
                           : config.id;
  b.version = config.version;
  b.created_at = now_iso();
  b.variant = config.variant;
  b.sex_scope = config.scope;

  if (config.kind == ModelKind::cox) {
    const auto x = pre.transform(train_raw);
    b.model = cox::fit_cox(x, ytrain);
  } else {
    const auto [inner, val] = validation_split(p, config.seed);
    const auto xin = pre.transform(p.raw.select_rows(inner));
    const auto xval = pre.transform(p.raw.select_rows(val));
    const auto yin = p.outcome.select(inner);
    const auto yval = p.outcome.select(val);
    if (config.search_budget > 0) {
      search::Splits splits{xin.values, yin, xval.values, yval, pre.columns};
      auto result = search::run_search(search::SearchSpace{}, config.search_budget, splits, config.seed,
                                       {.max_epochs = config.max_epochs, .patience = config.patience});
      out.trials = std::move(result.trials);
      b.model = std::move(result.best_model);
    } else {
      auto model = neural::build_network(config.hyper, pre.columns.size(), config.seed, pre.columns);
      b.model = neural::train(std::move(model), xin.values, yin, xval.values, yval,
                              {.max_epochs = config.max_epochs, .patience = config.patience, .seed = config.seed});
    }
    // baseline hazard over the whole training part
    neural::fit_baseline(std::get<neural::NeuralCoxModel>(b.model), pre.transform(train_raw).values, ytrain);
  }
  b.preprocessor = std::move(pre);
  b.validate();

  out.train_rows = p.train.size();
  out.test_rows = p.test.size();
  auto eval_opts = config.eval;
  eval_opts.seed = config.seed;
  out.test_report = evaluate_bundle(b, p.raw.select_rows(p.test), p.outcome.select(p.test), eval_opts);
  b.metadata = {{"model", to_string(config.kind)},
                {"train_rows", out.train_rows},
                {"test_rows", out.test_rows},
                {"seed", config.seed},
                {"test_evaluation", eval::to_json(out.test_report)}};
  return out;
}

SelectionRun run_selection(const cohort::RawCohort& raw, const cohort::CohortSchema& schema,
                           const selection::SelectionOptions& options, std::uint64_t seed) {
  const auto p = prepare(raw, schema, cohort::Variant::full, cohort::SexScope::all, seed);
  const auto pre = cohort::Preprocessor::fit(p.raw.select_rows(p.train), p.schema);
  const auto [inner, val] = validation_split(p, seed);
  const auto xin = pre.transform(p.raw.select_rows(inner));
  const auto xval = pre.transform(p.raw.select_rows(val));

  SelectionRun run;
  run.trace = selection::select_features(xin, p.outcome.select(inner), xval, p.outcome.select(val), options);

  const auto xtrain = pre.transform(p.raw.select_rows(p.train));
  const auto xtest = pre.transform(p.raw.select_rows(p.test));
  const auto ytrain = p.outcome.select(p.train);
  const auto ytest = p.outcome.select(p.test);
  auto test_c = [&](const std::vector<std::string>& cols) {
    const auto fit = cox::fit_cox(xtrain.select_columns(cols), ytrain);
    const auto eta = multiply(xtest.select_columns(cols).values, fit.beta);
    return eval::concordance_index(eta, ytest.duration, ytest.event);
  };
  run.full_test_cindex = test_c(xtrain.names);
  run.reduced_test_cindex = test_c(run.trace.final_features);
  return run;
}

}  // namespace survwright::pipeline
