#include "survwright/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "survwright/error.hpp"
#include "survwright/kernels.hpp"

namespace survwright::neural {

using nlohmann::json;

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::leaky_relu:
      return "leaky_relu";
    case Activation::relu:
      return "relu";
    case Activation::selu:
      return "selu";
  }
  return "relu";
}

std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Activation parse_activation(std::string_view text) {
  if (text == "leaky_relu" || text == "LeakyReLU") return Activation::leaky_relu;
  if (text == "relu" || text == "ReLU") return Activation::relu;
  if (text == "selu" || text == "SELU") return Activation::selu;
  throw Error("config", fmt::format("activation: unknown value '{}'", text));
}

Optimizer parse_optimizer(std::string_view text) {
  if (text == "sgd" || text == "SGD") return Optimizer::sgd;
  if (text == "adam" || text == "Adam") return Optimizer::adam;
  throw Error("config", fmt::format("optimizer: unknown value '{}'", text));
}

void HyperConfig::validate() const {
  auto in_range = [](const char* field, double v, double lo, double hi) {
    if (!(v >= lo && v <= hi)) throw Error("config", fmt::format("{} = {} outside [{}, {}]", field, v, lo, hi));
  };
  in_range("dropout", dropout, 0.0, 0.9);
  in_range("weight_decay", weight_decay, 0.0, 20.0);
  in_range("momentum", momentum, 0.0, 1.0);
  in_range("learning_rate", learning_rate, 1e-5, 1.0);
  for (auto w : topology) {
    if (w < 1) throw Error("config", "topology: hidden widths must be positive");
  }
}

std::vector<std::size_t> parse_topology(std::string_view text) {
  std::vector<std::size_t> out;
  if (text.empty() || text == "linear") return out;
  std::string s(text);
  // accept the multiplication sign as a separator
  for (std::size_t pos; (pos = s.find("×")) != std::string::npos;) s.replace(pos, 2, "x");
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = s.find_first_of("xX", start);
    const auto part = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
    std::string trimmed;
    for (char c : part) {
      if (c != ' ') trimmed += c;
    }
    if (trimmed.empty() || trimmed.find_first_not_of("0123456789") != std::string::npos) {
      throw Error("config", fmt::format("topology: cannot parse '{}'", text));
    }
    const auto w = std::stoul(trimmed);
    if (w == 0) throw Error("config", "topology: hidden widths must be positive");
    out.push_back(w);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

std::string topology_name(std::span<const std::size_t> widths) {
  if (widths.empty()) return "linear";
  std::string out;
  for (std::size_t k = 0; k < widths.size(); ++k) out += (k ? "x" : "") + std::to_string(widths[k]);
  return out;
}

const std::vector<std::string>& search_topologies() {
  static const std::vector<std::string> list{"8",     "32",     "256",      "32x32",   "64x64",
                                             "128x128", "64x16", "256x32", "32x32x32", "64x64x64"};
  return list;
}

json to_json(const HyperConfig& c) {
  return {{"activation", to_string(c.activation)},
          {"topology", topology_name(c.topology)},
          {"dropout", c.dropout},
          {"weight_decay", c.weight_decay},
          {"batch_norm", c.batch_norm},
          {"optimizer", to_string(c.optimizer)},
          {"momentum", c.momentum},
          {"learning_rate", c.learning_rate}};
}

HyperConfig config_from_json(const json& doc) {
  HyperConfig c;
  try {
    if (doc.contains("activation")) c.activation = parse_activation(doc.at("activation").get<std::string>());
    if (doc.contains("topology")) c.topology = parse_topology(doc.at("topology").get<std::string>());
    c.dropout = doc.value("dropout", c.dropout);
    c.weight_decay = doc.value("weight_decay", c.weight_decay);
    c.batch_norm = doc.value("batch_norm", c.batch_norm);
    if (doc.contains("optimizer")) c.optimizer = parse_optimizer(doc.at("optimizer").get<std::string>());
    c.momentum = doc.value("momentum", c.momentum);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
  } catch (const json::exception& e) {
    throw Error("config", std::string("malformed configuration: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<bool> NeuralCoxModel::weight_mask() const {
  std::vector<bool> mask(params.size(), false);
  for (const auto& l : layers) {
    std::fill(mask.begin() + static_cast<std::ptrdiff_t>(l.weight),
              mask.begin() + static_cast<std::ptrdiff_t>(l.weight + l.in * l.out), true);
  }
  return mask;
}

namespace {

// Offsets for a topology; parameters are left empty.
std::vector<Layer> layout(const HyperConfig& config, std::size_t input_width, std::size_t& total) {
  std::vector<Layer> layers;
  std::size_t in = input_width;
  total = 0;
  auto add = [&](std::size_t out, bool bn) {
    Layer l;
    l.in = in;
    l.out = out;
    l.weight = total;
    total += in * out;
    l.bias = total;
    total += out;
    l.batch_norm = bn;
    if (bn) {
      l.gamma = total;
      total += out;
      l.beta = total;
      total += out;
      l.running_mean.assign(out, 0.0);
      l.running_var.assign(out, 1.0);
    }
    layers.push_back(std::move(l));
    in = out;
  };
  for (auto w : config.topology) add(w, config.batch_norm);
  add(1, false);
  return layers;
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::relu:
      return z > 0.0 ? z : 0.0;
    case Activation::leaky_relu:
      return z > 0.0 ? z : kLeakySlope * z;
    case Activation::selu:
      return z > 0.0 ? kSeluLambda * z : kSeluLambda * kSeluAlpha * std::expm1(z);
  }
  return z;
}

double activate_grad(Activation a, double z) {
  switch (a) {
    case Activation::relu:
      return z > 0.0 ? 1.0 : 0.0;
    case Activation::leaky_relu:
      return z > 0.0 ? 1.0 : kLeakySlope;
    case Activation::selu:
      return z > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(z);
  }
  return 1.0;
}

// W stored output-major (row o = weights into unit o); W^T is in x out.
Matrix transposed_weights(std::span<const double> params, const Layer& l) {
  Matrix wt(l.in, l.out);
  for (std::size_t o = 0; o < l.out; ++o) {
    for (std::size_t k = 0; k < l.in; ++k) wt(k, o) = params[l.weight + o * l.in + k];
  }
  return wt;
}

// out(i, o) = input_i . W_o + b_o; streamed along o for wide layers, one
// dot per unit for narrow ones (the head)
Matrix affine(const Matrix& input, std::span<const double> params, const Layer& l) {
  const auto bias = params.subspan(l.bias, l.out);
  Matrix out(input.rows(), l.out);
  if (l.out < l.in) {
    for (std::size_t i = 0; i < input.rows(); ++i) {
      const auto row = input.row(i);
      for (std::size_t o = 0; o < l.out; ++o) out(i, o) = kernels::dot(row, params.subspan(l.weight + o * l.in, l.in)) + bias[o];
    }
    return out;
  }
  const auto wt = transposed_weights(params, l);
  for (std::size_t i = 0; i < input.rows(); ++i) {
    auto dst = out.row(i);
    std::copy(bias.begin(), bias.end(), dst.begin());
    const auto row = input.row(i);
    for (std::size_t k = 0; k < l.in; ++k) {
      if (row[k] != 0.0) kernels::axpy(row[k], wt.row(k), dst);
    }
  }
  return out;
}

}  // namespace

NeuralCoxModel build_network(const HyperConfig& config, std::size_t input_width, std::uint64_t seed,
                             std::vector<std::string> input_columns) {
  config.validate();
  if (input_width < 1) throw Error("config", "input_width must be at least 1");
  if (!input_columns.empty() && input_columns.size() != input_width) {
    throw Error("config", "input column names do not match the input width");
  }
  NeuralCoxModel m;
  m.config = config;
  m.input_columns = std::move(input_columns);
  std::size_t total = 0;
  m.layers = layout(config, input_width, total);
  m.params.assign(total, 0.0);
  Rng rng(seed);
  for (const auto& l : m.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    // selu hidden layers need unit-variance weights (bound sqrt(3/fan_in)) and zero bias to self-normalize
    const bool selu = config.activation == Activation::selu && &l != &m.layers.back();
    const double wb = selu ? std::sqrt(3.0) * bound : bound;
    for (std::size_t k = 0; k < l.in * l.out; ++k) m.params[l.weight + k] = wb * (2.0 * uniform01(rng) - 1.0);
    for (std::size_t k = 0; k < l.out; ++k) m.params[l.bias + k] = selu ? 0.0 : bound * (2.0 * uniform01(rng) - 1.0);
    if (l.batch_norm) std::fill_n(m.params.begin() + static_cast<std::ptrdiff_t>(l.gamma), l.out, 1.0);
  }
  return m;
}

std::vector<double> forward(const NeuralCoxModel& model, const Matrix& x, bool train_mode, Rng* rng,
                            ForwardCache* cache) {
  if (x.cols() != model.input_width()) {
    throw Error("dimension", fmt::format("expected {} inputs, got {}", model.input_width(), x.cols()));
  }
  for (double v : x.flat()) {
    if (!std::isfinite(v)) throw Error("non_finite", "network input contains a non-finite value");
  }
  const auto& cfg = model.config;
  const std::span<const double> params = model.params;
  const std::size_t n = x.rows();
  const bool drop = train_mode && cfg.dropout > 0.0;
  if (drop && !rng) throw Error("config", "train-mode dropout needs a random generator");
  if (cache) cache->layers.assign(model.layers.size(), {});

  Matrix h = x;
  for (std::size_t li = 0; li + 1 < model.layers.size(); ++li) {
    const auto& l = model.layers[li];
    Matrix z = affine(h, params, l);
    ForwardCache::LayerCache* lc = cache ? &cache->layers[li] : nullptr;
    if (l.batch_norm) {
      std::vector<double> mean(l.out, 0.0), var(l.out, 0.0), inv(l.out);
      if (train_mode) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t o = 0; o < l.out; ++o) mean[o] += z(i, o);
        }
        for (auto& v : mean) v /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t o = 0; o < l.out; ++o) var[o] += (z(i, o) - mean[o]) * (z(i, o) - mean[o]);
        }
        for (auto& v : var) v /= static_cast<double>(n);
      } else {
        mean = l.running_mean;
        var = l.running_var;
      }
      for (std::size_t o = 0; o < l.out; ++o) inv[o] = 1.0 / std::sqrt(var[o] + kBatchNormEps);
      Matrix xhat(n, l.out);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < l.out; ++o) {
          xhat(i, o) = (z(i, o) - mean[o]) * inv[o];
          z(i, o) = params[l.gamma + o] * xhat(i, o) + params[l.beta + o];
        }
      }
      if (lc) {
        lc->xhat = std::move(xhat);
        lc->inv_std = std::move(inv);
        lc->batch_mean = std::move(mean);
        lc->batch_var = std::move(var);
      }
    }
    Matrix next(n, l.out);
    for (std::size_t k = 0; k < z.flat().size(); ++k) next.flat()[k] = activate(cfg.activation, z.flat()[k]);
    if (drop) {
      Matrix mask(n, l.out);
      const double keep = 1.0 - cfg.dropout;
      for (auto& m : mask.flat()) m = uniform01(*rng) < keep ? 1.0 / keep : 0.0;
      for (std::size_t k = 0; k < next.flat().size(); ++k) next.flat()[k] *= mask.flat()[k];
      if (lc) lc->mask = std::move(mask);
    }
    if (lc) {
      lc->input = std::move(h);
      lc->z = std::move(z);
    }
    h = std::move(next);
  }
  const auto& head = model.layers.back();
  Matrix out = affine(h, params, head);
  if (cache) cache->layers.back().input = std::move(h);
  return std::vector<double>(out.flat().begin(), out.flat().end());
}

double neg_partial_loglik_loss(std::span<const double> log_risks, const cox::RiskSetIndex& index) {
  const auto ll = cox::partial_loglik_eta(log_risks, index);
  return -ll.value / static_cast<double>(index.total_events);
}

double neg_partial_loglik_loss(std::span<const double> log_risks, const OutcomeColumn& outcome) {
  return neg_partial_loglik_loss(log_risks, cox::RiskSetIndex::build(outcome));
}

LossAndGradient gradients(const NeuralCoxModel& model, const Matrix& x, const cox::RiskSetIndex& index, Rng* rng,
                          ForwardCache* cache) {
  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  const auto eta = forward(model, x, true, rng, &fc);
  const auto ll = cox::partial_loglik_eta(eta, index);
  const double events = static_cast<double>(index.total_events);
  const std::span<const double> params = model.params;
  const auto& cfg = model.config;
  const std::size_t n = x.rows();

  LossAndGradient out;
  out.loss = -ll.value / events;
  out.gradient.assign(params.size(), 0.0);
  std::span<double> grad = out.gradient;

  // dL/d eta, carried backwards as an n x width matrix
  Matrix delta(n, 1);
  for (std::size_t i = 0; i < n; ++i) delta(i, 0) = -ll.gradient[i] / events;

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const auto& l = model.layers[li];
    auto& lc = fc.layers[li];
    const bool head = li + 1 == model.layers.size();
    Matrix da = std::move(delta);
    if (!head) {
      if (!lc.mask.empty()) {
        for (std::size_t k = 0; k < da.flat().size(); ++k) da.flat()[k] *= lc.mask.flat()[k];
      }
      for (std::size_t k = 0; k < da.flat().size(); ++k) da.flat()[k] *= activate_grad(cfg.activation, lc.z.flat()[k]);
      if (l.batch_norm) {
        const double nn = static_cast<double>(n);
        const auto gamma = params.subspan(l.gamma, l.out);
        std::vector<double> sum_d(l.out, 0.0), sum_dx(l.out, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const auto d = da.row(i);
          const auto xh = lc.xhat.row(i);
          for (std::size_t o = 0; o < l.out; ++o) {
            grad[l.gamma + o] += d[o] * xh[o];
            grad[l.beta + o] += d[o];
            const double dxhat = d[o] * gamma[o];
            sum_d[o] += dxhat;
            sum_dx[o] += dxhat * xh[o];
          }
        }
        for (std::size_t i = 0; i < n; ++i) {
          auto d = da.row(i);
          const auto xh = lc.xhat.row(i);
          for (std::size_t o = 0; o < l.out; ++o) {
            d[o] = lc.inv_std[o] / nn * (nn * d[o] * gamma[o] - sum_d[o] - xh[o] * sum_dx[o]);
          }
        }
      }
    }
    Matrix below(n, l.in);
    if (l.out < l.in) {
      // narrow layer: per-unit rows of W, contiguous along the input
      for (std::size_t i = 0; i < n; ++i) {
        const auto input = lc.input.row(i);
        auto down = below.row(i);
        for (std::size_t o = 0; o < l.out; ++o) {
          const double d = da(i, o);
          if (d == 0.0) continue;
          kernels::axpy(d, input, grad.subspan(l.weight + o * l.in, l.in));
          grad[l.bias + o] += d;
          if (li > 0) kernels::axpy(d, params.subspan(l.weight + o * l.in, l.in), down);
        }
      }
    } else {
      // wide layer: weight gradient accumulated transposed (in x out)
      const auto wt = transposed_weights(params, l);
      Matrix gwt(l.in, l.out);
      std::vector<double> gbias(l.out, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto input = lc.input.row(i);
        const auto d = da.row(i);
        kernels::axpy(1.0, d, gbias);
        auto down = below.row(i);
        for (std::size_t k = 0; k < l.in; ++k) {
          if (input[k] != 0.0) kernels::axpy(input[k], d, gwt.row(k));
          if (li > 0) down[k] = kernels::dot(d, wt.row(k));
        }
      }
      for (std::size_t o = 0; o < l.out; ++o) {
        grad[l.bias + o] += gbias[o];
        for (std::size_t k = 0; k < l.in; ++k) grad[l.weight + o * l.in + k] += gwt(k, o);
      }
    }
    delta = std::move(below);
  }

  if (cfg.weight_decay > 0.0) {
    for (const auto& l : model.layers) {
      const auto w = params.subspan(l.weight, l.in * l.out);
      out.penalty += 0.5 * cfg.weight_decay * kernels::dot(w, w);
      kernels::axpy(cfg.weight_decay, w, grad.subspan(l.weight, l.in * l.out));
    }
  }
  return out;
}

void fit_baseline(NeuralCoxModel& model, const Matrix& x, const OutcomeColumn& outcome) {
  const auto eta = forward(model, x, false);
  model.baseline_cumhaz = cox::breslow_cumhaz(eta, outcome);
  model.max_time = *std::max_element(outcome.duration.begin(), outcome.duration.end());
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

NeuralCoxModel train(NeuralCoxModel model, const Matrix& x_train, const OutcomeColumn& y_train, const Matrix& x_val,
                     const OutcomeColumn& y_val, const TrainOptions& options) {
  const auto& cfg = model.config;
  const auto train_index = cox::RiskSetIndex::build(y_train);
  const auto val_index = cox::RiskSetIndex::build(y_val);
  if (train_index.total_events == 0) throw Error("no_events", "training split has no events");
  if (val_index.total_events == 0) throw Error("no_events", "validation split has no events");

  Rng rng(options.seed);
  std::vector<double> m(model.params.size(), 0.0), v(model.params.size(), 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double n = static_cast<double>(x_train.rows());

  auto best_params = model.params;
  auto best_layers = model.layers;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  model.history.clear();
  auto diverged = [&](int epoch, const char* what) {
    return DivergenceError(fmt::format("{} became non-finite at epoch {} (config {})", what, epoch,
                                       to_json(cfg).dump()),
                           epoch);
  };

  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    ForwardCache cache;
    auto lg = gradients(model, x_train, train_index, &rng, &cache);
    if (!std::isfinite(lg.loss) || !all_finite(lg.gradient)) throw diverged(epoch, "training loss");

    for (std::size_t li = 0; li < model.layers.size(); ++li) {
      auto& l = model.layers[li];
      if (!l.batch_norm) continue;
      const auto& lc = cache.layers[li];
      for (std::size_t o = 0; o < l.out; ++o) {
        const double unbiased = n > 1 ? lc.batch_var[o] * n / (n - 1.0) : lc.batch_var[o];
        l.running_mean[o] = (1.0 - kBatchNormMomentum) * l.running_mean[o] + kBatchNormMomentum * lc.batch_mean[o];
        l.running_var[o] = (1.0 - kBatchNormMomentum) * l.running_var[o] + kBatchNormMomentum * unbiased;
      }
    }

    auto& p = model.params;
    const auto& g = lg.gradient;
    if (cfg.optimizer == Optimizer::sgd) {
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = cfg.momentum * m[k] + g[k];
        p[k] -= cfg.learning_rate * m[k];
      }
    } else {
      const double c1 = 1.0 - std::pow(b1, epoch), c2 = 1.0 - std::pow(b2, epoch);
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
        p[k] -= cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      }
    }
    if (!all_finite(p)) throw diverged(epoch, "parameters");

    const double val = neg_partial_loglik_loss(forward(model, x_val, false), val_index);
    if (!std::isfinite(val)) throw diverged(epoch, "validation loss");
    model.history.push_back({epoch, lg.loss, val});
    if (val < best_val) {
      best_val = val;
      best_params = p;
      best_layers = model.layers;
      model.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best > options.patience) {
      break;
    }
  }
  spdlog::debug("neural: {} epochs, best {} (val loss {:.6f})", model.history.size(), model.best_epoch, best_val);
  model.params = std::move(best_params);
  model.layers = std::move(best_layers);
  fit_baseline(model, x_train, y_train);
  return model;
}

std::vector<double> log_risk(const NeuralCoxModel& model, const Matrix& x) { return forward(model, x, false); }

cox::RiskPrediction predict_risk(const NeuralCoxModel& model, std::span<const double> x, double horizon) {
  Matrix row(1, x.size());
  std::copy(x.begin(), x.end(), row.flat().begin());
  const double eta = forward(model, row, false).front();
  return cox::risk_from_cumhaz(model.baseline_cumhaz, model.max_time, eta, horizon);
}

json to_json(const NeuralCoxModel& model) {
  json layers = json::array();
  const std::span<const double> p = model.params;
  auto slice = [&](std::size_t off, std::size_t len) {
    auto s = p.subspan(off, len);
    return std::vector<double>(s.begin(), s.end());
  };
  for (const auto& l : model.layers) {
    json j{{"in", l.in}, {"out", l.out}, {"weight", slice(l.weight, l.in * l.out)}, {"bias", slice(l.bias, l.out)}};
    if (l.batch_norm) {
      j["batch_norm"] = {{"gamma", slice(l.gamma, l.out)},
                         {"beta", slice(l.beta, l.out)},
                         {"running_mean", l.running_mean},
                         {"running_var", l.running_var}};
    }
    layers.push_back(std::move(j));
  }
  json history = json::array();
  for (const auto& h : model.history) history.push_back({h.epoch, h.train_loss, h.val_loss});
  return {{"model_kind", "neural_cox"},
          {"config", to_json(model.config)},
          {"topology", topology_name(model.config.topology)},
          {"input_columns", model.input_columns},
          {"layers", std::move(layers)},
          {"baseline_cumhaz", cox::to_json(model.baseline_cumhaz)},
          {"max_time", model.max_time},
          {"best_epoch", model.best_epoch},
          {"history", std::move(history)}};
}

NeuralCoxModel neural_model_from_json(const json& doc) {
  try {
    if (doc.value("model_kind", std::string{}) != "neural_cox") throw Error("model", "not a neural_cox document");
    NeuralCoxModel m;
    m.config = config_from_json(doc.at("config"));
    m.input_columns = doc.value("input_columns", std::vector<std::string>{});
    const auto& layers = doc.at("layers");
    std::size_t total = 0;
    m.layers = layout(m.config, layers.at(0).at("in").get<std::size_t>(), total);
    if (m.layers.size() != layers.size()) throw Error("model", "layer count does not match the topology");
    m.params.assign(total, 0.0);
    auto fill = [&](const json& arr, std::size_t off, std::size_t len) {
      auto v = arr.get<std::vector<double>>();
      if (v.size() != len) throw Error("model", "parameter array has the wrong length");
      std::copy(v.begin(), v.end(), m.params.begin() + static_cast<std::ptrdiff_t>(off));
    };
    for (std::size_t k = 0; k < layers.size(); ++k) {
      auto& l = m.layers[k];
      const auto& j = layers[k];
      if (j.at("in").get<std::size_t>() != l.in || j.at("out").get<std::size_t>() != l.out) {
        throw Error("model", fmt::format("layer {} shape does not match the topology", k));
      }
      fill(j.at("weight"), l.weight, l.in * l.out);
      fill(j.at("bias"), l.bias, l.out);
      if (l.batch_norm) {
        const auto& bn = j.at("batch_norm");
        fill(bn.at("gamma"), l.gamma, l.out);
        fill(bn.at("beta"), l.beta, l.out);
        l.running_mean = bn.at("running_mean").get<std::vector<double>>();
        l.running_var = bn.at("running_var").get<std::vector<double>>();
      }
    }
    m.baseline_cumhaz = cox::step_function_from_json(doc.at("baseline_cumhaz"));
    m.max_time = doc.at("max_time").get<double>();
    m.best_epoch = doc.value("best_epoch", 0);
    for (const auto& h : doc.value("history", json::array())) {
      m.history.push_back({h.at(0).get<int>(), h.at(1).get<double>(), h.at(2).get<double>()});
    }
    return m;
  } catch (const json::exception& e) {
    throw Error("model", std::string("malformed neural_cox document: ") + e.what());
  }
}

}  // namespace survwright::neural
