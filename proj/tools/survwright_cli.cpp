// survwright command-line front end. Every subcommand prints one JSON
// document on stdout; failures print {"code", "message"} on stderr and exit 1.

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "survwright/cohort.hpp"
#include "survwright/error.hpp"
#include "survwright/eval.hpp"
#include "survwright/framingham.hpp"
#include "survwright/pipeline.hpp"
#include "survwright/search.hpp"
#include "survwright/selection.hpp"
#include "survwright/service.hpp"
#include "survwright/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace survwright;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_logger_mt("survwright");
  spdlog::set_default_logger(logger);
  const char* level = std::getenv("SURVWRIGHT_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("parse", fmt::format("{}: parse error at byte {}: {}", path.string(), e.byte, e.what()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << text;
}

// A store is a directory holding the validated schema and cohort.
struct Store {
  cohort::CohortSchema schema;
  cohort::RawCohort raw;
};

Store load_store(const fs::path& dir) {
  Store s;
  s.schema = cohort::load_schema(dir / "schema.json");
  s.raw = cohort::load_cohort(dir / "cohort.csv", s.schema);
  return s;
}

void emit(const json& doc) { std::cout << doc.dump(2) << '\n'; }

// Selected design columns from a selection trace or a plain JSON array.
std::vector<std::string> read_features(const fs::path& path) {
  const auto doc = read_json(path);
  if (doc.is_array()) return doc.get<std::vector<std::string>>();
  if (doc.contains("final_features")) return doc.at("final_features").get<std::vector<std::string>>();
  if (doc.contains("trace")) return doc.at("trace").at("final_features").get<std::vector<std::string>>();
  throw Error("config", path.string() + " holds neither a feature list nor a selection trace");
}

struct Common {
  std::uint64_t seed = 1;
};

void add_seed(CLI::App* cmd, Common& c) { cmd->add_option("--seed", c.seed, "random seed")->capture_default_str(); }

// ---- synth

struct SynthArgs {
  Common common;
  fs::path out;
  fs::path spec;
  std::size_t n = 20000;
  std::size_t noise = 4;
};

void run_synth(const SynthArgs& a) {
  fs::create_directories(a.out);
  cohort::CohortSchema schema;
  cohort::RawCohort raw;
  json truth;
  if (!a.spec.empty()) {
    auto spec = synth::generator_spec_from_json(read_json(a.spec));
    spec.seed = a.common.seed;
    const auto gen = synth::generate(spec);
    schema = synth::linear_schema(spec.beta.size());
    raw = synth::to_raw(gen);
    truth = gen.truth;
  } else {
    synth::CohortTemplate t;
    t.n = a.n;
    t.seed = a.common.seed;
    t.noise_features = a.noise;
    auto c = synth::generate_biobank_cohort(t);
    schema = std::move(c.schema);
    raw = std::move(c.raw);
    truth = std::move(c.truth);
  }
  std::ofstream csv(a.out / "cohort.csv");
  cohort::write_cohort(csv, raw, schema);
  write_text(a.out / "schema.json", cohort::to_json(schema).dump(2) + "\n");
  write_text(a.out / "truth.json", truth.dump(2) + "\n");
  emit({{"cohort", (a.out / "cohort.csv").string()},
        {"schema", (a.out / "schema.json").string()},
        {"truth", (a.out / "truth.json").string()},
        {"rows", raw.size()},
        {"seed", a.common.seed}});
}

// ---- ingest

struct IngestArgs {
  Common common;
  fs::path csv, schema, store;
};

void run_ingest(const IngestArgs& a) {
  const auto schema = cohort::load_schema(a.schema);
  const auto raw = cohort::load_cohort(a.csv, schema);
  cohort::QualityReport quality;
  quality.rows_loaded = raw.size();
  cohort::derive_features(raw, schema, &quality);
  const auto built = cohort::extract_outcome(raw, schema, &quality);
  if (built.outcome.size() == 0) throw Error("no_events", "no subjects remain after exclusions");

  fs::create_directories(a.store);
  write_text(a.store / "schema.json", cohort::to_json(schema).dump(2) + "\n");
  {
    std::ofstream out(a.store / "cohort.csv");
    cohort::write_cohort(out, raw, schema);
  }
  const auto summary = cohort::summarize_cohort(raw.select_rows(built.kept), schema, built.outcome);
  write_text(a.store / "quality.json", cohort::to_json(quality).dump(2) + "\n");
  write_text(a.store / "summary.json", cohort::to_json(summary).dump(2) + "\n");
  spdlog::info("cohort summary\n{}", cohort::render_table(summary));
  emit({{"store", a.store.string()},
        {"rows", raw.size()},
        {"subjects", built.outcome.size()},
        {"events", built.outcome.event_count()},
        {"excluded", quality.excluded_subjects.size()},
        {"quality", cohort::to_json(quality)}});
}

// ---- select

struct SelectArgs {
  Common common;
  fs::path store, out, exclude_file;
  selection::SelectionOptions options;
};

void run_select(SelectArgs a) {
  const auto s = load_store(a.store);
  if (!a.exclude_file.empty()) {
    std::ifstream in(a.exclude_file);
    if (!in) throw Error("io", "cannot open " + a.exclude_file.string());
    a.options.exclusions = selection::read_exclusion_list(in);
  }
  const auto run = pipeline::run_selection(s.raw, s.schema, a.options, a.common.seed);
  json doc{{"pipeline", selection::render_pipeline(run.trace)},
           {"final_features", run.trace.final_features},
           {"full_test_cindex", run.full_test_cindex},
           {"reduced_test_cindex", run.reduced_test_cindex},
           {"seed", a.common.seed},
           {"trace", selection::to_json(run.trace)}};
  if (!a.out.empty()) write_text(a.out, doc.dump(2) + "\n");
  emit(doc);
}

// ---- train / search

struct TrainArgs {
  Common common;
  fs::path store, out, features, config, trial_log, summary_csv;
  std::string model = "cox", variant = "full", sex = "all", id, version = "1";
  int budget = 0, max_epochs = 512, patience = 10;
  std::size_t rounds = 50;
  double horizon = 10.0;
};

json train_summary(const pipeline::TrainResult& r, const fs::path& out) {
  json doc{{"bundle", out.string()},
           {"id", r.bundle.id},
           {"version", r.bundle.version},
           {"model_kind", r.bundle.model_kind()},
           {"variant", cohort::to_string(r.bundle.variant)},
           {"sex_scope", cohort::to_string(r.bundle.sex_scope)},
           {"inputs", r.bundle.input_columns()},
           {"train_rows", r.train_rows},
           {"test_rows", r.test_rows},
           {"test", eval::to_json(r.test_report)}};
  if (!r.trials.empty()) {
    json trials = json::array();
    for (const auto& t : r.trials) trials.push_back(search::to_json(t));
    doc["trials"] = std::move(trials);
  }
  return doc;
}

void run_train(const TrainArgs& a, bool search_mode) {
  const auto s = load_store(a.store);
  pipeline::TrainConfig c;
  c.kind = search_mode ? pipeline::ModelKind::deepsurv : pipeline::parse_model_kind(a.model);
  c.variant = cohort::parse_variant(a.variant);
  c.scope = cohort::parse_sex_scope(a.sex);
  c.seed = a.common.seed;
  if (!a.features.empty()) c.features = read_features(a.features);
  if (!a.config.empty()) {
    auto doc = read_json(a.config);
    if (doc.contains("best_config")) doc = doc.at("best_config");
    if (doc.contains("config")) doc = doc.at("config");
    c.hyper = neural::config_from_json(doc);
    c.hyper.validate();
  }
  c.search_budget = search_mode ? a.budget : 0;
  if (search_mode && a.budget < 1) throw Error("config", "--budget must be at least 1");
  c.max_epochs = a.max_epochs;
  c.patience = a.patience;
  c.eval.rounds = a.rounds;
  c.eval.horizon = a.horizon;
  c.id = a.id;
  c.version = a.version;
  const auto r = pipeline::train_bundle(s.raw, s.schema, c);
  service::save_bundle(r.bundle, a.out);
  if (!a.trial_log.empty()) {
    std::ofstream log(a.trial_log);
    search::write_trial_log(log, r.trials);
  }
  auto doc = train_summary(r, a.out);
  if (search_mode) {
    const auto& best = std::get<neural::NeuralCoxModel>(r.bundle.model);
    doc["best_config"] = neural::to_json(best.config);
  } else if (r.bundle.is_cox()) {
    const auto rows = cox::summarize(std::get<cox::CoxFit>(r.bundle.model));
    doc["coefficients"] = cox::summary_json(rows);
    if (!a.summary_csv.empty()) write_text(a.summary_csv, cox::summary_csv(rows));
    spdlog::info("coefficients\n{}", cox::render_summary(rows));
  }
  emit(doc);
}

// ---- eval

struct EvalArgs {
  Common common;
  fs::path store, calibration_csv, table;
  std::vector<fs::path> models;
  std::optional<std::uint64_t> split_seed;
  std::size_t rounds = 50;
  double horizon = 10.0;
};

// One row per bundle: model, variant, sex, c-index [CI], ICI.
std::string render_eval_table(const json& rows) {
  std::string out = fmt::format("{:<28} {:<8} {:<7} {:<26} {:>8}\n", "model", "variant", "sex", "c-index [95% CI]", "ICI");
  for (const auto& r : rows) {
    out += fmt::format("{:<28} {:<8} {:<7} {:<26} {:>8}\n", r["model"].get<std::string>(), r["variant"].get<std::string>(),
                       r["sex_scope"].get<std::string>(), r["report"]["c_index_text"].get<std::string>(),
                       r["report"]["ici_text"].get<std::string>());
  }
  return out;
}

void run_eval(const EvalArgs& a) {
  const auto s = load_store(a.store);
  json rows = json::array();
  for (const auto& path : a.models) {
    const auto bundle = service::load_bundle(path);
    const std::uint64_t split_seed =
        a.split_seed ? *a.split_seed : bundle.metadata.value("seed", std::uint64_t{1});
    const auto p = pipeline::prepare(s.raw, s.schema, bundle.variant, bundle.sex_scope, split_seed);
    eval::EvalOptions opts;
    opts.rounds = a.rounds;
    opts.horizon = a.horizon;
    opts.seed = a.common.seed;
    const auto report =
        pipeline::evaluate_bundle(bundle, p.raw.select_rows(p.test), p.outcome.select(p.test), opts);
    if (!a.calibration_csv.empty()) {
      auto csv = a.calibration_csv;
      if (a.models.size() > 1) csv.replace_filename(csv.stem().string() + "_" + bundle.id + csv.extension().string());
      write_text(csv, eval::calibration_csv(report.bins));
    }
    rows.push_back({{"model", bundle.id},
                    {"model_kind", bundle.model_kind()},
                    {"variant", cohort::to_string(bundle.variant)},
                    {"sex_scope", cohort::to_string(bundle.sex_scope)},
                    {"split_seed", split_seed},
                    {"report", eval::to_json(report)}});
  }
  const auto table = render_eval_table(rows);
  spdlog::info("test-set performance\n{}", table);
  if (!a.table.empty()) write_text(a.table, table);
  emit({{"seed", a.common.seed}, {"rows", rows}, {"table", table}});
}

// ---- score

struct ScoreArgs {
  Common common;
  fs::path model, request, store;
  std::optional<std::size_t> row;
};

// Request for one stored subject: every raw feature, missing values as null.
json request_for_row(const Store& s, std::size_t row, const std::string& model) {
  if (row >= s.raw.size()) throw Error("config", fmt::format("row {} is out of range ({} rows)", row, s.raw.size()));
  json features = json::object();
  for (const auto& f : s.schema.features) {
    if (f.kind == cohort::FeatureKind::derived) continue;
    const auto& col = s.raw.columns.at(f.name);
    if (col.missing(row)) {
      features[f.name] = nullptr;
    } else if (col.is_labelled()) {
      features[f.name] = *col.labels[row];
    } else {
      features[f.name] = *col.numbers[row];
    }
  }
  return {{"model", model}, {"features", features}, {"lenient", true}};
}

void run_score(const ScoreArgs& a) {
  const auto bundle = service::load_bundle(a.model);
  if (a.row) {
    // stored subject: service path against the offline transform
    if (a.store.empty()) throw Error("config", "--row needs --store");
    const auto s = load_store(a.store);
    const auto doc = request_for_row(s, *a.row, bundle.id);
    const auto resp = service::score(bundle, service::score_request_from_json(doc));
    const auto x = bundle.preprocessor.transform(s.raw.select_rows(std::vector<std::size_t>{*a.row}),
                                                 cohort::UnseenLevel::lenient);
    const double offline = service::bundle_predict_risk(bundle, x.values, cox::kDefaultHorizon).front();
    emit({{"request", doc},
          {"response", service::to_json(resp)},
          {"offline_risk", offline},
          {"match", std::abs(offline - resp.risk) <= 1e-12 * std::max(1.0, std::abs(offline))}});
    return;
  }
  if (a.request.empty()) throw Error("config", "give --request or --store with --row");
  auto doc = read_json(a.request);
  if (!doc.contains("model")) doc["model"] = bundle.id;
  const auto req = service::score_request_from_json(doc);
  if (req.model != bundle.id) throw Error("unknown_model", "request names '" + req.model + "', bundle is '" + bundle.id + "'");
  if (doc.contains("overrides")) {
    emit(service::to_json(service::whatif(bundle, req)));
  } else {
    emit(service::to_json(service::score(bundle, req)));
  }
}

// ---- framingham

struct FraminghamArgs {
  Common common;
  fs::path store, coeffs;
  std::vector<fs::path> models;
  bool refit = false;
};

void run_framingham(const FraminghamArgs& a) {
  const auto s = load_store(a.store);
  const auto coeffs = framingham::load_coefficients(a.coeffs);
  const auto p = pipeline::prepare(s.raw, s.schema, cohort::Variant::full, cohort::SexScope::all, a.common.seed);
  const auto test_raw = p.raw.select_rows(p.test);
  const auto derived = framingham::derive_framingham_inputs(test_raw);
  if (derived.inputs.empty()) throw Error("domain", "no test subject has complete Framingham inputs");
  const auto outcome = p.outcome.select(p.test).select(derived.rows);
  const auto scored_raw = test_raw.select_rows(derived.rows);
  std::vector<bool> female;
  for (const auto& in : derived.inputs) female.push_back(in.female);

  std::vector<framingham::NamedScore> scores{{"framingham", framingham::framingham_risks(derived.inputs, coeffs)}};
  if (a.refit) scores.push_back({"framingham refit", framingham::refit_cox(derived.inputs, outcome).risks});

  // scope-all bundles score everyone; a female and a male bundle of the same
  // kind combine into one sex-specific score
  std::map<std::string, std::vector<double>> by_sex;
  std::map<std::string, int> parts;
  for (const auto& path : a.models) {
    const auto b = service::load_bundle(path);
    const auto x = b.preprocessor.transform(scored_raw, cohort::UnseenLevel::lenient);
    const auto risk = service::bundle_predict_risk(b, x.values, cox::kDefaultHorizon);
    if (b.sex_scope == cohort::SexScope::all) {
      scores.push_back({b.id, risk});
      continue;
    }
    const auto name = fmt::format("{} {} sex-specific", b.model_kind(), cohort::to_string(b.variant));
    auto& merged = by_sex[name];
    merged.resize(risk.size(), 0.0);
    const bool want_female = b.sex_scope == cohort::SexScope::female;
    for (std::size_t i = 0; i < risk.size(); ++i) {
      if (female[i] == want_female) merged[i] = risk[i];
    }
    parts[name] += want_female ? 1 : 2;
  }
  for (auto& [name, risk] : by_sex) {
    if (parts[name] != 3) throw Error("config", name + " needs exactly one female and one male bundle");
    scores.push_back({name, std::move(risk)});
  }
  const auto report = framingham::compare_scores(scores, female, outcome);
  spdlog::info("c-index by sex\n{}", framingham::render_comparison(report));
  json excluded = json::object();
  for (const auto& [row, reason] : derived.excluded) excluded[reason] = excluded.value(reason, 0) + 1;
  emit({{"subjects", derived.inputs.size()},
        {"excluded", excluded},
        {"provenance", coeffs.provenance},
        {"seed", a.common.seed},
        {"comparison", framingham::to_json(report)}});
}

// ---- serve

struct ServeArgs {
  Common common;
  std::vector<fs::path> models;
  std::string host = "127.0.0.1";
  int port = 8080;
};

void run_serve(const ServeArgs& a) {
  service::Registry reg;
  for (const auto& path : a.models) reg.add(service::load_bundle(path));
  service::Server server(reg);
  const int port = server.bind(a.host, a.port);
  std::cout << json{{"listening", fmt::format("http://{}:{}", a.host, port)}, {"models", reg.list()["models"].size()}}.dump()
            << std::endl;
  server.listen();
}

void fail(const std::string& code, const std::string& message) {
  std::cerr << json{{"code", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"survwright: survival risk models for cardiovascular disease"};
  app.require_subcommand(1);

  SynthArgs synth_a;
  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort (CSV + schema)");
  add_seed(synth, synth_a.common);
  synth->add_option("--out", synth_a.out, "output directory")->required();
  synth->add_option("--spec", synth_a.spec, "generator spec JSON (linear cohort); omit for the mixed-type cohort")
      ->check(CLI::ExistingFile);
  synth->add_option("--n", synth_a.n, "subjects (mixed-type cohort)")->capture_default_str();
  synth->add_option("--noise", synth_a.noise, "pure-noise features (mixed-type cohort)")->capture_default_str();

  IngestArgs ingest_a;
  auto* ingest = app.add_subcommand("ingest", "validate a CSV against a schema into a store");
  add_seed(ingest, ingest_a.common);
  ingest->add_option("--csv", ingest_a.csv)->required()->check(CLI::ExistingFile);
  ingest->add_option("--schema", ingest_a.schema)->required()->check(CLI::ExistingFile);
  ingest->add_option("--store", ingest_a.store, "store directory to write")->required();

  SelectArgs select_a;
  auto* select = app.add_subcommand("select", "univariate filter, backward elimination, exclusion list");
  add_seed(select, select_a.common);
  select->add_option("--store", select_a.store)->required();
  select->add_option("--out", select_a.out, "write the selection trace here");
  select->add_option("--alpha", select_a.options.alpha)->capture_default_str();
  select->add_option("--cindex-tol", select_a.options.cindex_tol)->capture_default_str();
  select->add_option("--initial-batch", select_a.options.initial_batch, "0 = remaining/8");
  select->add_option("--exclude-file", select_a.exclude_file)->check(CLI::ExistingFile);

  TrainArgs train_a;
  auto add_train_options = [](CLI::App* cmd, TrainArgs& t) {
    add_seed(cmd, t.common);
    cmd->add_option("--store", t.store)->required();
    cmd->add_option("--out", t.out, "bundle file")->required();
    cmd->add_option("--variant", t.variant)->check(CLI::IsMember({"full", "digital"}))->capture_default_str();
    cmd->add_option("--sex", t.sex)->check(CLI::IsMember({"all", "male", "female"}))->capture_default_str();
    cmd->add_option("--features", t.features, "selection trace or JSON list of design columns")
        ->check(CLI::ExistingFile);
    cmd->add_option("--max-epochs", t.max_epochs)->capture_default_str();
    cmd->add_option("--patience", t.patience)->capture_default_str();
    cmd->add_option("--rounds", t.rounds, "bootstrap rounds for the test report")->capture_default_str();
    cmd->add_option("--horizon", t.horizon)->capture_default_str();
    cmd->add_option("--id", t.id, "model id (default derived from kind/variant/sex)");
    cmd->add_option("--version", t.version)->capture_default_str();
  };
  auto* train = app.add_subcommand("train", "fit a Cox or DeepSurv model and write a bundle");
  add_train_options(train, train_a);
  train->add_option("--model", train_a.model)->check(CLI::IsMember({"cox", "deepsurv"}))->capture_default_str();
  train->add_option("--config", train_a.config, "DeepSurv hyper-parameters JSON")->check(CLI::ExistingFile);
  train->add_option("--summary-csv", train_a.summary_csv, "Cox coefficient table (log HR, HR, CI, p)");

  TrainArgs search_a;
  search_a.model = "deepsurv";
  search_a.budget = 20;
  auto* search = app.add_subcommand("search", "random hyper-parameter search for DeepSurv");
  add_train_options(search, search_a);
  search->add_option("--budget", search_a.budget, "trials")->capture_default_str();
  search->add_option("--trial-log", search_a.trial_log, "JSON-lines trial log");

  EvalArgs eval_a;
  auto* evalc = app.add_subcommand("eval", "c-index with bootstrap CI and calibration on the test split");
  add_seed(evalc, eval_a.common);
  evalc->add_option("--store", eval_a.store)->required();
  evalc->add_option("--model", eval_a.models, "one or more bundles")->required()->check(CLI::ExistingFile);
  evalc->add_option("--calibration-csv", eval_a.calibration_csv, "bundle id is appended when several models are given");
  evalc->add_option("--table", eval_a.table, "write the text table here");
  evalc->add_option("--split-seed", eval_a.split_seed, "defaults to the bundle's training seed");
  evalc->add_option("--rounds", eval_a.rounds)->capture_default_str();
  evalc->add_option("--horizon", eval_a.horizon)->capture_default_str();

  ScoreArgs score_a;
  auto* scorec = app.add_subcommand("score", "score one request offline (what-if when it has overrides)");
  add_seed(scorec, score_a.common);
  scorec->add_option("--model", score_a.model)->required()->check(CLI::ExistingFile);
  scorec->add_option("--request", score_a.request, "request JSON as posted to /v1/score")->check(CLI::ExistingFile);
  scorec->add_option("--store", score_a.store, "score a stored subject instead");
  scorec->add_option("--row", score_a.row, "row of the stored subject");

  FraminghamArgs fram_a;
  auto* fram = app.add_subcommand("framingham", "Framingham general CVD score on the test split");
  add_seed(fram, fram_a.common);
  fram->add_option("--store", fram_a.store)->required();
  fram->add_option("--coeffs", fram_a.coeffs)->required()->check(CLI::ExistingFile);
  fram->add_option("--model", fram_a.models, "bundles to compare")->check(CLI::ExistingFile);
  fram->add_flag("--refit", fram_a.refit, "also refit the Framingham terms per sex");

  ServeArgs serve_a;
  auto* serve = app.add_subcommand("serve", "HTTP scoring service");
  add_seed(serve, serve_a.common);
  serve->add_option("--model", serve_a.models)->required()->check(CLI::ExistingFile);
  serve->add_option("--host", serve_a.host)->capture_default_str();
  serve->add_option("--port", serve_a.port, "0 picks a free port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("usage", e.what());
    return 2;
  }

  try {
    if (*synth) run_synth(synth_a);
    if (*ingest) run_ingest(ingest_a);
    if (*select) run_select(select_a);
    if (*train) run_train(train_a, false);
    if (*search) run_train(search_a, true);
    if (*evalc) run_eval(eval_a);
    if (*scorec) run_score(score_a);
    if (*fram) run_framingham(fram_a);
    if (*serve) run_serve(serve_a);
  } catch (const Error& e) {
    fail(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    fail("internal", e.what());
    return 1;
  }
  return 0;
}
