#include "survwright/search.hpp"

#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <istream>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>
#include <spdlog/spdlog.h>

#include "survwright/error.hpp"
#include "survwright/eval.hpp"

namespace survwright::search {

using nlohmann::json;

void SearchSpace::validate() const {
  if (activations.empty() || topologies.empty() || batch_norm.empty() || optimizers.empty()) {
    throw Error("config", "search space has an empty categorical dimension");
  }
  if (!(dropout_max >= 0 && dropout_max <= 0.9)) throw Error("config", "dropout bound outside [0, 0.9]");
  if (!(weight_decay_max >= 0 && weight_decay_max <= 20)) throw Error("config", "weight_decay bound outside [0, 20]");
  if (!(momentum_max >= 0 && momentum_max <= 1)) throw Error("config", "momentum bound outside [0, 1]");
  if (!(lr_min >= 1e-5 && lr_min < lr_max && lr_max <= 1)) throw Error("config", "learning_rate bounds outside [1e-5, 1]");
  for (const auto& t : topologies) neural::parse_topology(t);
}

namespace {

template <class T>
const T& pick(const std::vector<T>& options, Rng& rng) {
  const auto k = std::min(options.size() - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(options.size())));
  return options[k];
}

}  // namespace

neural::HyperConfig sample_config(const SearchSpace& space, Rng& rng) {
  neural::HyperConfig c;
  c.activation = pick(space.activations, rng);
  c.topology = neural::parse_topology(pick(space.topologies, rng));
  c.batch_norm = space.batch_norm[std::min<std::size_t>(space.batch_norm.size() - 1,
                                                        static_cast<std::size_t>(uniform01(rng) * space.batch_norm.size()))];
  c.optimizer = pick(space.optimizers, rng);
  c.dropout = space.dropout_max * uniform01(rng);
  c.weight_decay = space.weight_decay_max * uniform01(rng);
  c.momentum = space.momentum_max * uniform01(rng);
  const double lo = std::log(space.lr_min), hi = std::log(space.lr_max);
  c.learning_rate = std::clamp(std::exp(lo + (hi - lo) * uniform01(rng)), space.lr_min, space.lr_max);
  return c;
}

double TrialRecord::score() const { return val_loss ? *val_loss : std::numeric_limits<double>::infinity(); }

json to_json(const TrialRecord& t) {
  json j{{"trial", t.trial},
         {"seed", t.seed},
         {"config", neural::to_json(t.config)},
         {"val_loss", t.val_loss ? json(*t.val_loss) : json(nullptr)},
         {"val_cindex", t.val_cindex ? json(*t.val_cindex) : json(nullptr)},
         {"epochs_run", t.epochs_run},
         {"wall_time", t.wall_time}};
  if (!t.failure.empty()) j["failure"] = t.failure;
  return j;
}

TrialRecord trial_from_json(const json& doc) {
  try {
    TrialRecord t;
    t.trial = doc.at("trial").get<int>();
    t.seed = doc.at("seed").get<std::uint64_t>();
    t.config = neural::config_from_json(doc.at("config"));
    if (!doc.at("val_loss").is_null()) t.val_loss = doc.at("val_loss").get<double>();
    if (!doc.at("val_cindex").is_null()) t.val_cindex = doc.at("val_cindex").get<double>();
    t.epochs_run = doc.at("epochs_run").get<int>();
    t.wall_time = doc.at("wall_time").get<double>();
    t.failure = doc.value("failure", std::string{});
    return t;
  } catch (const json::exception& e) {
    throw Error("parse", std::string("malformed trial record: ") + e.what());
  }
}

void write_trial_log(std::ostream& out, const std::vector<TrialRecord>& trials) {
  for (const auto& t : trials) out << to_json(t).dump() << '\n';
}

std::vector<TrialRecord> read_trial_log(std::istream& in) {
  std::vector<TrialRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(trial_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error("parse", fmt::format("trial log line {}: {}", out.size() + 1, e.what()));
    }
  }
  return out;
}

SearchResult run_search(const SearchSpace& space, int budget, const Splits& data, std::uint64_t seed,
                        const SearchOptions& options) {
  if (budget < 1) throw Error("config", "budget must be at least 1");
  space.validate();
  Rng config_stream(derive_seed(seed, 0));
  SearchResult result;
  std::optional<neural::NeuralCoxModel> best;
  for (int t = 0; t < budget; ++t) {
    TrialRecord rec;
    rec.trial = t;
    rec.seed = derive_seed(seed, static_cast<std::uint64_t>(t) + 1);
    rec.config = sample_config(space, config_stream);
    const auto start = std::chrono::steady_clock::now();
    try {
      auto model = neural::build_network(rec.config, data.x_train.cols(), rec.seed, data.columns);
      model = neural::train(std::move(model), data.x_train, data.y_train, data.x_val, data.y_val,
                            {.max_epochs = options.max_epochs, .patience = options.patience, .seed = rec.seed});
      rec.epochs_run = static_cast<int>(model.history.size());
      const auto eta = neural::log_risk(model, data.x_val);
      rec.val_loss = neural::neg_partial_loglik_loss(eta, data.y_val);
      rec.val_cindex = eval::concordance_index(eta, data.y_val.duration, data.y_val.event);
      if (!best || rec.score() < result.trials[static_cast<std::size_t>(result.best_trial)].score()) {
        best = std::move(model);
        result.best_trial = t;
      }
    } catch (const neural::DivergenceError& e) {
      rec.epochs_run = e.epoch();
      rec.failure = e.what();
    } catch (const Error& e) {
      rec.failure = e.what();
    }
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    spdlog::info("trial {}/{}: {} val_loss={} ({:.1f}s)", t + 1, budget, neural::to_json(rec.config).dump(),
                 rec.val_loss ? fmt::format("{:.5f}", *rec.val_loss) : "failed", rec.wall_time);
    if (options.trial_log) *options.trial_log << to_json(rec).dump() << std::endl;
    result.trials.push_back(std::move(rec));
  }
  if (!best) {
    json log = json::array();
    for (const auto& t : result.trials) log.push_back(to_json(t));
    throw Error("search_failed", "every trial failed: " + log.dump());
  }
  result.best = best->config;
  result.best_model = std::move(*best);
  return result;
}

}  // namespace survwright::search
