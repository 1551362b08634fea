#pragma once

// Random search over the neural hyperparameter space, scored by validation
// loss.

#include <cstdint>
#include <iosfwd>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "survwright/neural.hpp"

namespace survwright::search {

using cohort::OutcomeColumn;

// Bounds are fixed at construction; sample_config reads them only.
struct SearchSpace {
  std::vector<neural::Activation> activations{neural::Activation::leaky_relu, neural::Activation::relu,
                                              neural::Activation::selu};
  std::vector<std::string> topologies = neural::search_topologies();
  std::vector<bool> batch_norm{true, false};
  std::vector<neural::Optimizer> optimizers{neural::Optimizer::sgd, neural::Optimizer::adam};
  double dropout_max = 0.9;       // uniform [0, max]
  double weight_decay_max = 20.0;
  double momentum_max = 1.0;
  double lr_min = 1e-5;           // log-uniform
  double lr_max = 1.0;

  void validate() const;
};

neural::HyperConfig sample_config(const SearchSpace& space, Rng& rng);

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;  // network init and dropout
  neural::HyperConfig config;
  std::optional<double> val_loss;  // empty when the trial failed (scores +inf)
  std::optional<double> val_cindex;
  int epochs_run = 0;
  double wall_time = 0.0;  // seconds
  std::string failure;

  double score() const;
};

nlohmann::json to_json(const TrialRecord& t);
TrialRecord trial_from_json(const nlohmann::json& doc);
// One JSON document per line.
void write_trial_log(std::ostream& out, const std::vector<TrialRecord>& trials);
std::vector<TrialRecord> read_trial_log(std::istream& in);

struct Splits {
  Matrix x_train;
  OutcomeColumn y_train;
  Matrix x_val;
  OutcomeColumn y_val;
  std::vector<std::string> columns;
};

struct SearchOptions {
  int max_epochs = 512;
  int patience = 10;
  // Appended to as each trial finishes, when set.
  std::ostream* trial_log = nullptr;
};

struct SearchResult {
  neural::HyperConfig best;
  int best_trial = 0;
  neural::NeuralCoxModel best_model;
  std::vector<TrialRecord> trials;
};

// Trial t draws its configuration from one seeded stream (so a larger budget
// extends a smaller one) and trains with seed derive_seed(seed, t + 1).
// Failed trials are recorded and skipped; Error("search_failed") when none
// succeeds.
SearchResult run_search(const SearchSpace& space, int budget, const Splits& data, std::uint64_t seed,
                        const SearchOptions& options = {});

}  // namespace survwright::search
