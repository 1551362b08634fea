#pragma once

// Model bundles (model + frozen preprocessing) and risk scoring, shared by
// the CLI and the HTTP service.

#include <filesystem>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "survwright/cohort.hpp"
#include "survwright/cox.hpp"
#include "survwright/neural.hpp"

namespace survwright::service {

inline constexpr int kBundleVersion = 1;

struct ModelBundle {
  std::string id;       // key used by requests
  std::string version;  // model version echoed in responses
  std::string created_at;
  cohort::Variant variant = cohort::Variant::full;
  cohort::SexScope sex_scope = cohort::SexScope::all;
  cohort::Preprocessor preprocessor;
  std::variant<cox::CoxFit, neural::NeuralCoxModel> model;
  nlohmann::json metadata = nlohmann::json::object();  // evaluation, selection trace, ...

  bool is_cox() const { return std::holds_alternative<cox::CoxFit>(model); }
  std::string model_kind() const { return is_cox() ? "cox" : "neural_cox"; }
  const std::vector<std::string>& input_columns() const;
  // Error("bundle") when model and preprocessing disagree, Error("variant")
  // when a digital bundle carries excluded columns.
  void validate() const;
};

nlohmann::json serialize_model(const ModelBundle& bundle);
// Error("bundle_version") when the document's version is not supported.
ModelBundle deserialize_model(const nlohmann::json& doc);
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
// Error("parse") with the byte offset for corrupt files.
ModelBundle load_bundle(const std::filesystem::path& path);

// Log-risk for already-encoded design rows.
std::vector<double> bundle_log_risk(const ModelBundle& bundle, const Matrix& x);
std::vector<double> bundle_predict_risk(const ModelBundle& bundle, const Matrix& x, double horizon);

struct ScoreRequest {
  std::string model;
  nlohmann::json features = nlohmann::json::object();  // raw feature -> number, label or null
  double horizon_years = cox::kDefaultHorizon;
  bool lenient = false;
  nlohmann::json overrides = nlohmann::json::object();  // what-if only
};

ScoreRequest score_request_from_json(const nlohmann::json& doc);

struct ScoreResponse {
  double risk = 0.0;
  double linear_predictor = 0.0;
  // Per raw feature (one-hot columns summed); empty for neural bundles.
  std::optional<std::map<std::string, double>> contributions;
  std::string model_id;
  std::string model_version;
  std::string variant;
  bool extrapolated = false;
  std::vector<std::string> flags;
};

nlohmann::json to_json(const ScoreResponse& r);

// Strict requests must supply every required raw feature (Error
// "missing_features" listing them); lenient ones get the training fill value
// and an "imputed:<name>" flag. Unknown names are flagged and ignored.
ScoreResponse score(const ModelBundle& bundle, const ScoreRequest& request);

struct WhatIfResponse {
  ScoreResponse base;
  ScoreResponse modified;
  double delta = 0.0;
};
nlohmann::json to_json(const WhatIfResponse& r);
// Error("unknown_feature") for an override that is not a raw feature.
WhatIfResponse whatif(const ModelBundle& bundle, const ScoreRequest& request);

// Bundles by id; immutable once built.
class Registry {
 public:
  void add(ModelBundle bundle);
  const ModelBundle& get(const std::string& id) const;  // Error("unknown_model")
  nlohmann::json list() const;
  bool empty() const { return bundles_.empty(); }

 private:
  std::map<std::string, std::shared_ptr<const ModelBundle>> bundles_;
};

// HTTP status for an error code (400 malformed, 404 unknown model, 422
// semantic request errors, 500 otherwise).
int http_status(const std::string& code);
nlohmann::json error_body(const std::string& code, const std::string& message,
                          const nlohmann::json& details = nlohmann::json::object());

// Request handlers independent of the transport: body in, (status, body) out.
struct HttpResult {
  int status = 200;
  std::string body;
};
HttpResult handle_models(const Registry& registry);
HttpResult handle_score(const Registry& registry, const std::string& body);
HttpResult handle_whatif(const Registry& registry, const std::string& body);

class Server {
 public:
  explicit Server(const Registry& registry);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;
  // Port 0 picks a free port; returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace survwright::service
