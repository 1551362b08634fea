#pragma once

// Feed-forward network whose scalar output replaces the Cox linear predictor,
// trained full-batch on the negative partial likelihood.

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "survwright/cox.hpp"
#include "survwright/matrix.hpp"
#include "survwright/stats.hpp"

namespace survwright::neural {

using cohort::OutcomeColumn;

enum class Activation { leaky_relu, relu, selu };
enum class Optimizer { sgd, adam };

std::string_view to_string(Activation a);
std::string_view to_string(Optimizer o);
Activation parse_activation(std::string_view text);
Optimizer parse_optimizer(std::string_view text);

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

struct HyperConfig {
  Activation activation = Activation::relu;
  std::vector<std::size_t> topology{32, 32};  // hidden widths
  double dropout = 0.0;
  double weight_decay = 0.0;
  bool batch_norm = false;
  Optimizer optimizer = Optimizer::adam;
  double momentum = 0.9;  // sgd only
  double learning_rate = 1e-3;

  // Throws Error("config") naming the offending field.
  void validate() const;
};

// "32x32" (also "32×32") -> {32, 32}; "linear" or "" -> {} (head only).
std::vector<std::size_t> parse_topology(std::string_view text);
std::string topology_name(std::span<const std::size_t> widths);
// The hidden-layer choices of the search space.
const std::vector<std::string>& search_topologies();

nlohmann::json to_json(const HyperConfig& config);
HyperConfig config_from_json(const nlohmann::json& doc);

// One affine layer; hidden layers optionally carry batch norm. Offsets index
// the model's flat parameter vector.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight = 0;  // out x in, row-major
  std::size_t bias = 0;
  bool batch_norm = false;
  std::size_t gamma = 0;
  std::size_t beta = 0;
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct NeuralCoxModel {
  HyperConfig config;
  std::vector<std::string> input_columns;
  std::vector<Layer> layers;  // hidden layers then the single-output head
  std::vector<double> params;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  cox::StepFunction baseline_cumhaz;
  double max_time = 0.0;

  std::size_t input_width() const { return layers.front().in; }
  // Mask over `params`: true for affine weights (the decayed entries).
  std::vector<bool> weight_mask() const;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; selu hidden
// layers use sqrt(3/fan_in) weights and zero bias instead. Batch-norm scale 1, shift 0, running mean 0, running variance 1.
NeuralCoxModel build_network(const HyperConfig& config, std::size_t input_width, std::uint64_t seed,
                             std::vector<std::string> input_columns = {});

// Intermediate values of a forward pass, needed for backpropagation.
struct ForwardCache {
  struct LayerCache {
    Matrix input;     // n x in
    Matrix xhat;      // normalized pre-activation (batch norm only)
    std::vector<double> inv_std;
    std::vector<double> batch_mean;
    std::vector<double> batch_var;  // biased
    Matrix z;         // pre-activation after batch norm
    Matrix mask;      // dropout multipliers (already scaled), empty when off
  };
  std::vector<LayerCache> layers;
};

// Hidden layer: affine -> batch norm -> activation -> dropout. Train mode
// uses batch statistics and samples dropout from `rng`; eval mode is
// deterministic. Throws Error("non_finite") on non-finite input.
std::vector<double> forward(const NeuralCoxModel& model, const Matrix& x, bool train_mode, Rng* rng = nullptr,
                            ForwardCache* cache = nullptr);

// -partial log-likelihood / number of events (Efron ties).
double neg_partial_loglik_loss(std::span<const double> log_risks, const cox::RiskSetIndex& index);
double neg_partial_loglik_loss(std::span<const double> log_risks, const OutcomeColumn& outcome);

struct LossAndGradient {
  double loss = 0.0;       // per-event loss, without the penalty
  double penalty = 0.0;    // weight_decay / 2 * sum of squared affine weights
  std::vector<double> gradient;  // d(loss + penalty) / d params
};

// Forward (train mode) plus backpropagation.
LossAndGradient gradients(const NeuralCoxModel& model, const Matrix& x, const cox::RiskSetIndex& index,
                          Rng* rng = nullptr, ForwardCache* cache = nullptr);

struct TrainOptions {
  int max_epochs = 512;
  int patience = 10;
  std::uint64_t seed = 0;
};

// Thrown when the loss stops being finite.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, int epoch) : Error("divergence", message), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Full-batch training with the configured optimizer; one parameter update
// per epoch. Stops once the validation loss has not improved for more than
// `patience` epochs and returns the best-validation parameters with a Breslow
// baseline from eval-mode training outputs.
NeuralCoxModel train(NeuralCoxModel model, const Matrix& x_train, const OutcomeColumn& y_train,
                     const Matrix& x_val, const OutcomeColumn& y_val, const TrainOptions& options = {});

// Breslow baseline from eval-mode outputs on `x`.
void fit_baseline(NeuralCoxModel& model, const Matrix& x, const OutcomeColumn& outcome);

std::vector<double> log_risk(const NeuralCoxModel& model, const Matrix& x);
cox::RiskPrediction predict_risk(const NeuralCoxModel& model, std::span<const double> x,
                                 double horizon = cox::kDefaultHorizon);

nlohmann::json to_json(const NeuralCoxModel& model);
NeuralCoxModel neural_model_from_json(const nlohmann::json& doc);

}  // namespace survwright::neural
