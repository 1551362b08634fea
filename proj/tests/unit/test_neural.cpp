#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <nlohmann/json.hpp>

#include "survwright/cox.hpp"
#include "survwright/error.hpp"
#include "survwright/eval.hpp"
#include "survwright/neural.hpp"
#include "survwright/stats.hpp"
#include "survwright/synth.hpp"

using namespace survwright;
using namespace survwright::neural;

namespace {

struct Data {
  Matrix x;
  OutcomeColumn y;
};

Data make_data(Rng& rng, std::size_t n, std::size_t p, bool ties) {
  Data d;
  d.x = Matrix(n, p);
  for (auto& v : d.x.flat()) v = standard_normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    d.y.duration.push_back(ties ? 1.0 + std::floor(4.0 * uniform01(rng)) : 0.1 + uniform01(rng));
    d.y.event.push_back(uniform01(rng) < 0.6 ? 1 : 0);
  }
  d.y.event[0] = 1;
  return d;
}

double objective(const NeuralCoxModel& m, const Data& d, const cox::RiskSetIndex& index) {
  const auto lg = gradients(m, d.x, index);
  return lg.loss + lg.penalty;
}

// || analytic - central difference || / || central difference ||
double gradient_error(NeuralCoxModel m, const Data& d) {
  const auto index = cox::RiskSetIndex::build(d.y);
  const auto g = gradients(m, d.x, index).gradient;
  std::vector<double> fd(g.size());
  const double h = 1e-6;
  for (std::size_t k = 0; k < m.params.size(); ++k) {
    const double keep = m.params[k];
    m.params[k] = keep + h;
    const double up = objective(m, d, index);
    m.params[k] = keep - h;
    const double down = objective(m, d, index);
    m.params[k] = keep;
    fd[k] = (up - down) / (2.0 * h);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    num += (g[k] - fd[k]) * (g[k] - fd[k]);
    den += fd[k] * fd[k];
  }
  return std::sqrt(num) / std::max(1e-12, std::sqrt(den));
}

HyperConfig linear_config() {
  HyperConfig c;
  c.topology = {};
  return c;
}

}  // namespace

TEST_CASE("topology parsing") {
  CHECK(parse_topology("32x32") == std::vector<std::size_t>{32, 32});
  CHECK(parse_topology("32×32") == std::vector<std::size_t>{32, 32});
  CHECK(parse_topology("256") == std::vector<std::size_t>{256});
  CHECK(parse_topology("linear").empty());
  CHECK(parse_topology("").empty());
  CHECK_THROWS_AS(parse_topology("32x"), Error);
  CHECK_THROWS_AS(parse_topology("0x4"), Error);
  CHECK_THROWS_AS(parse_topology("abc"), Error);
  for (const auto& t : search_topologies()) CHECK(topology_name(parse_topology(t)) == t);
  CHECK(search_topologies().size() == 10);
}

TEST_CASE("configuration validation") {
  HyperConfig c;
  CHECK_NOTHROW(c.validate());
  c.dropout = 0.95;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("dropout"), Error);
  c = {};
  c.weight_decay = 25;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("weight_decay"), Error);
  c = {};
  c.learning_rate = 2.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.momentum = -0.1;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_THROWS_AS(parse_activation("tanh"), Error);
  CHECK(parse_optimizer("SGD") == Optimizer::sgd);

  HyperConfig published;
  published.activation = Activation::relu;
  published.batch_norm = true;
  published.dropout = 0.3338;
  published.weight_decay = 0.0596;
  published.learning_rate = 0.000309;
  published.optimizer = Optimizer::adam;
  published.topology = {32, 32};
  const auto back = config_from_json(to_json(published));
  CHECK(back.dropout == published.dropout);
  CHECK(back.weight_decay == published.weight_decay);
  CHECK(back.learning_rate == published.learning_rate);
  CHECK(back.topology == published.topology);
  CHECK(back.batch_norm);
  CHECK(to_json(published)["topology"] == "32x32");
}

TEST_CASE("network shapes") {
  HyperConfig c;
  c.topology = {32, 32};
  auto m = build_network(c, 47, 1);
  REQUIRE(m.layers.size() == 3);
  CHECK(m.layers[0].in == 47);
  CHECK(m.layers[0].out == 32);
  CHECK(m.layers[1].in == 32);
  CHECK(m.layers[2].out == 1);
  CHECK(m.params.size() == 47 * 32 + 32 + 32 * 32 + 32 + 32 + 1);

  c.topology = {256};
  c.batch_norm = true;
  m = build_network(c, 608, 1);
  CHECK(m.layers[0].in == 608);
  CHECK(m.layers[0].out == 256);
  CHECK(m.params.size() == 608 * 256 + 256 * 3 + 256 + 1);
  Matrix x(5, 608, 0.1);
  CHECK(forward(m, x, false).size() == 5);
  Matrix wrong(5, 607);
  CHECK_THROWS_AS(forward(m, wrong, false), Error);

  // init bounds
  for (std::size_t k = 0; k < 608 * 256; ++k) CHECK(std::abs(m.params[k]) <= 1.0 / std::sqrt(608.0));
  CHECK(m.params[m.layers[0].gamma] == 1.0);
  CHECK(m.params[m.layers[0].beta] == 0.0);
}

TEST_CASE("construction is deterministic in the seed") {
  HyperConfig c;
  const auto a = build_network(c, 6, 42);
  const auto b = build_network(c, 6, 42);
  const auto other = build_network(c, 6, 43);
  CHECK(a.params == b.params);
  CHECK(a.params != other.params);
}

TEST_CASE("activation values") {
  auto single = [](Activation act, double input) {
    HyperConfig c;
    c.topology = {1};
    c.activation = act;
    auto m = build_network(c, 1, 0);
    m.params = {1.0, 0.0, 1.0, 0.0};  // hidden w, b, head w, b
    Matrix x(1, 1, input);
    return forward(m, x, false).front();
  };
  CHECK(single(Activation::relu, -1.0) == 0.0);
  CHECK(single(Activation::relu, 2.0) == 2.0);
  CHECK(single(Activation::leaky_relu, -1.0) == doctest::Approx(-0.01));
  CHECK(single(Activation::selu, 1.0) == doctest::Approx(kSeluLambda));
  CHECK(single(Activation::selu, -1.0) == doctest::Approx(kSeluLambda * kSeluAlpha * (std::exp(-1.0) - 1.0)));
}

TEST_CASE("zero weights give zero output; dropout off makes train and eval agree") {
  HyperConfig c;
  c.topology = {8, 4};
  auto m = build_network(c, 3, 5);
  Rng rng(1);
  auto d = make_data(rng, 20, 3, false);
  const auto eval = forward(m, d.x, false);
  Rng r2(9);
  CHECK(forward(m, d.x, true, &r2) == eval);
  std::fill(m.params.begin(), m.params.end(), 0.0);
  for (double v : forward(m, d.x, false)) CHECK(v == 0.0);

  c.dropout = 0.5;
  auto dm = build_network(c, 3, 5);
  CHECK_THROWS_AS(forward(dm, d.x, true), Error);
  Rng r3(2);
  CHECK(forward(dm, d.x, true, &r3) != forward(dm, d.x, false));
}

TEST_CASE("loss matches the cox partial likelihood") {
  // two subjects, equal outputs: -ln(1/2) over two events, divided by 2
  OutcomeColumn two{{1.0, 2.0}, {1, 1}};
  std::vector<double> zeros{0.0, 0.0};
  CHECK(neg_partial_loglik_loss(zeros, two) == doctest::Approx(std::log(2.0) / 2.0));

  Rng rng(3);
  auto d = make_data(rng, 40, 3, true);
  std::vector<double> beta{0.4, -0.2, 0.1};
  auto m = build_network(linear_config(), 3, 1);
  m.params = {0.4, -0.2, 0.1, 0.7};  // bias cancels in the partial likelihood
  const auto ll = cox::partial_loglik(beta, d.x, d.y);
  const double events = static_cast<double>(d.y.event_count());
  CHECK(neg_partial_loglik_loss(forward(m, d.x, false), d.y) == doctest::Approx(-ll.value / events).epsilon(1e-12));
}

TEST_CASE("backpropagation matches finite differences") {
  Rng rng(2024);
  const Activation acts[] = {Activation::relu, Activation::leaky_relu, Activation::selu};
  int instance = 0;
  for (int rep = 0; rep < 8; ++rep) {
    for (bool bn : {false, true}) {
      HyperConfig c;
      c.activation = acts[rep % 3];
      c.topology = rep % 2 ? std::vector<std::size_t>{6, 4} : std::vector<std::size_t>{5};
      c.batch_norm = bn;
      c.weight_decay = rep % 4 == 0 ? 0.0 : 0.3;
      auto m = build_network(c, 4, 100 + rep);
      auto d = make_data(rng, 25, 4, rep % 2 == 0);
      const double err = gradient_error(m, d);
      INFO("instance " << instance << " bn " << bn);
      CHECK(err < 1e-4);
      ++instance;
    }
  }
  CHECK(instance >= 16);
  // linear head only
  for (int rep = 0; rep < 4; ++rep) {
    auto d = make_data(rng, 30, 3, true);
    CHECK(gradient_error(build_network(linear_config(), 3, rep), d) < 1e-4);
  }
}

TEST_CASE("weight decay adds exactly wd * w on affine weights") {
  Rng rng(8);
  auto d = make_data(rng, 30, 3, false);
  const auto index = cox::RiskSetIndex::build(d.y);
  HyperConfig c;
  c.topology = {4};
  c.batch_norm = true;
  auto m = build_network(c, 3, 3);
  const auto pure = gradients(m, d.x, index);
  CHECK(pure.penalty == 0.0);
  m.config.weight_decay = 2.0;
  const auto decayed = gradients(m, d.x, index);
  const auto mask = m.weight_mask();
  double sq = 0.0;
  for (std::size_t k = 0; k < m.params.size(); ++k) {
    const double expect = pure.gradient[k] + (mask[k] ? 2.0 * m.params[k] : 0.0);
    CHECK(decayed.gradient[k] == doctest::Approx(expect).epsilon(1e-12));
    if (mask[k]) sq += m.params[k] * m.params[k];
  }
  CHECK(decayed.penalty == doctest::Approx(sq));
  CHECK(decayed.loss == doctest::Approx(pure.loss));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  Rng rng(11);
  auto tr = make_data(rng, 40, 3, false);
  auto va = make_data(rng, 20, 3, false);
  for (auto opt : {Optimizer::sgd, Optimizer::adam}) {
    HyperConfig c;
    c.topology = {4};
    c.optimizer = opt;
    c.learning_rate = 1e-5;
    auto m = build_network(c, 3, 1);
    m.config.learning_rate = 0.0;  // outside the search range; train() does not re-validate
    TrainOptions o;
    o.max_epochs = 5;
    o.patience = 10;
    const auto out = train(m, tr.x, tr.y, va.x, va.y, o);
    CHECK(out.params == m.params);
  }
}

TEST_CASE("patience 0 stops at the first non-improving epoch") {
  Rng rng(12);
  auto tr = make_data(rng, 60, 3, false);
  auto va = make_data(rng, 60, 3, false);
  HyperConfig c;
  c.topology = {8};
  c.learning_rate = 0.5;
  c.optimizer = Optimizer::sgd;
  c.momentum = 0.9;
  auto m = build_network(c, 3, 2);
  TrainOptions o;
  o.patience = 0;
  o.max_epochs = 500;
  const auto out = train(m, tr.x, tr.y, va.x, va.y, o);
  REQUIRE(out.history.size() >= 2);
  const auto& h = out.history;
  double best = h.front().val_loss;
  for (std::size_t e = 1; e + 1 < h.size(); ++e) {
    CHECK(h[e].val_loss < best);
    best = h[e].val_loss;
  }
  CHECK(h.back().val_loss >= best);
  CHECK(out.best_epoch == static_cast<int>(h.size()) - 1);
}

TEST_CASE("early stopping restores the best parameters") {
  Rng rng(13);
  auto tr = make_data(rng, 80, 3, false);
  auto va = make_data(rng, 80, 3, false);
  HyperConfig c;
  c.topology = {16};
  c.batch_norm = true;
  c.learning_rate = 0.05;
  auto m = build_network(c, 3, 4);
  TrainOptions o;
  o.patience = 3;
  o.max_epochs = 400;
  const auto out = train(m, tr.x, tr.y, va.x, va.y, o);
  double best = 1e300;
  for (const auto& e : out.history) best = std::min(best, e.val_loss);
  CHECK(out.history[static_cast<std::size_t>(out.best_epoch - 1)].val_loss == best);
  CHECK(neg_partial_loglik_loss(log_risk(out, va.x), va.y) == doctest::Approx(best).epsilon(1e-12));
  CHECK(!out.baseline_cumhaz.times.empty());
}

TEST_CASE("a linear network reproduces the cox fit") {
  synth::GeneratorSpec spec;
  spec.n = 1500;
  spec.beta = {0.5, -0.5, 0.0};
  spec.seed = 77;
  const auto g = synth::generate(spec);
  const auto fit = cox::fit_cox(g.design.values, g.outcome);

  HyperConfig c = linear_config();
  c.learning_rate = 0.02;
  auto m = build_network(c, 3, 1);
  TrainOptions o;
  o.max_epochs = 3000;
  o.patience = 3000;
  const auto out = train(m, g.design.values, g.outcome, g.design.values, g.outcome, o);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(out.params[j] - fit.beta[j]) < 2e-3);
  const auto cx = cox::predict_risk(fit, g.design.values.row(0));
  const auto nn = predict_risk(out, g.design.values.row(0));
  CHECK(nn.risk == doctest::Approx(cx.risk).epsilon(1e-2));
}

TEST_CASE("training separates risk on synthetic data") {
  synth::GeneratorSpec spec;
  spec.n = 1200;
  spec.beta = {0.8, -0.6, 0.0, 0.3};
  spec.seed = 5;
  const auto g = synth::generate(spec);
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < g.outcome.size(); ++i) (i % 4 ? a : b).push_back(i);
  const auto xa = g.design.values.select_rows(a), xb = g.design.values.select_rows(b);
  const auto ya = g.outcome.select(a), yb = g.outcome.select(b);

  HyperConfig published;
  published.batch_norm = true;
  published.dropout = 0.3338;
  published.weight_decay = 0.0596;
  published.learning_rate = 0.000309;
  published.topology = {32, 32};
  HyperConfig quick = published;
  quick.learning_rate = 0.01;
  for (int k = 0; k < 2; ++k) {
    const auto& c = k ? quick : published;
    auto m = build_network(c, 4, 3);
    TrainOptions o;
    o.max_epochs = 300;
    o.seed = 1;
    const auto out = train(m, xa, ya, xb, yb, o);
    CHECK(!out.history.empty());
    if (k == 1) {
      const auto risk = log_risk(out, xb);
      CHECK(eval::concordance_index(risk, yb.duration, yb.event) > 0.6);
    }
  }
}

TEST_CASE("divergence is reported with the epoch") {
  Rng rng(21);
  auto tr = make_data(rng, 40, 2, false);
  for (std::size_t i = 0; i < tr.x.rows(); ++i) tr.x(i, 0) = 1e150 * (i % 2 ? 1 : -1);
  HyperConfig c = linear_config();
  c.optimizer = Optimizer::sgd;
  c.learning_rate = 1.0;
  auto m = build_network(c, 2, 1);
  try {
    train(m, tr.x, tr.y, tr.x, tr.y, {.max_epochs = 50, .patience = 50, .seed = 0});
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() >= 1);
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
}

TEST_CASE("json round trip") {
  Rng rng(31);
  auto tr = make_data(rng, 50, 3, true);
  HyperConfig c;
  c.topology = {6, 3};
  c.batch_norm = true;
  c.activation = Activation::selu;
  auto m = build_network(c, 3, 9, {"a", "b", "c"});
  const auto out = train(m, tr.x, tr.y, tr.x, tr.y, {.max_epochs = 20, .patience = 5, .seed = 1});
  const auto doc = to_json(out);
  CHECK(doc["model_kind"] == "neural_cox");
  const auto back = neural_model_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back.params == out.params);
  CHECK(back.input_columns == out.input_columns);
  CHECK(back.layers[0].running_var == out.layers[0].running_var);
  CHECK(log_risk(back, tr.x) == log_risk(out, tr.x));
  CHECK(predict_risk(back, tr.x.row(1)).risk == predict_risk(out, tr.x.row(1)).risk);
  auto broken = doc;
  broken["layers"][0]["weight"].erase(0);
  CHECK_THROWS_AS(neural_model_from_json(broken), Error);
  CHECK_THROWS_AS(neural_model_from_json(nlohmann::json{{"model_kind", "cox"}}), Error);
}

TEST_CASE("raising the earliest event's log-risk lowers the loss") {
  OutcomeColumn y{{1.0, 2.0, 3.0, 4.0}, {1, 0, 1, 1}};
  std::vector<double> eta{0.1, -0.3, 0.2, 0.0};
  const double before = neg_partial_loglik_loss(eta, y);
  eta[0] += 0.5;
  CHECK(neg_partial_loglik_loss(eta, y) < before);
}

TEST_CASE("small one-layer finite difference case") {
  Rng rng(99);
  auto d = make_data(rng, 10, 3, false);
  HyperConfig c;
  c.topology = {4};
  CHECK(gradient_error(build_network(c, 3, 1), d) < 1e-4);
}

TEST_CASE("positive output scaling keeps the ranking") {
  Rng rng(14);
  auto d = make_data(rng, 50, 3, false);
  HyperConfig c;
  c.topology = {8};
  auto m = build_network(c, 3, 2);
  const auto before = log_risk(m, d.x);
  const auto& head = m.layers.back();
  for (std::size_t k = 0; k <= head.in; ++k) m.params[head.weight + k] *= 3.5;  // weights then bias
  const auto after = log_risk(m, d.x);
  auto argsort = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    return idx;
  };
  CHECK(argsort(before) == argsort(after));
}

TEST_CASE("training is reproducible for a fixed seed") {
  Rng rng(15);
  auto tr = make_data(rng, 60, 3, false);
  auto va = make_data(rng, 30, 3, false);
  HyperConfig c;
  c.topology = {8, 8};
  c.dropout = 0.2;
  c.batch_norm = true;
  const TrainOptions o{.max_epochs = 30, .patience = 30, .seed = 4};
  const auto a = train(build_network(c, 3, 1), tr.x, tr.y, va.x, va.y, o);
  const auto b = train(build_network(c, 3, 1), tr.x, tr.y, va.x, va.y, o);
  CHECK(a.params == b.params);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].val_loss == b.history[e].val_loss);
  }
}

TEST_CASE("selu stays self-normalizing through three layers") {
  HyperConfig c;
  c.activation = Activation::selu;
  c.topology = {64, 64, 64};
  auto m = build_network(c, 32, 6);
  Rng rng(16);
  Matrix x(2000, 32);
  for (auto& v : x.flat()) v = standard_normal(rng);
  ForwardCache cache;
  forward(m, x, false, nullptr, &cache);
  // the head's input is the third hidden layer's output
  const auto& h = cache.layers.back().input;
  double mean = 0.0, sq = 0.0;
  for (double v : h.flat()) mean += v;
  mean /= static_cast<double>(h.flat().size());
  for (double v : h.flat()) sq += (v - mean) * (v - mean);
  const double var = sq / static_cast<double>(h.flat().size());
  CHECK(std::abs(mean) < 0.3);
  CHECK(var > 0.5);
  CHECK(var < 1.5);
}

TEST_CASE("one hidden layer keeps up with cox on linear data") {
  synth::GeneratorSpec spec;
  spec.n = 3000;
  spec.beta = {0.5, -0.5, 0.0};
  spec.seed = 8;
  const auto g = synth::generate(spec);
  std::vector<std::size_t> tr, va, te;
  for (std::size_t i = 0; i < g.outcome.size(); ++i) (i % 4 == 0 ? te : i % 4 == 1 ? va : tr).push_back(i);
  const auto& X = g.design.values;
  const auto fit = cox::fit_cox(X.select_rows(tr), g.outcome.select(tr));
  const auto xte = X.select_rows(te);
  const auto yte = g.outcome.select(te);
  const auto cox_c = eval::concordance_index(multiply(xte, fit.beta), yte.duration, yte.event);

  HyperConfig c;
  c.topology = {32};
  c.learning_rate = 0.01;
  auto out = train(build_network(c, 3, 1), X.select_rows(tr), g.outcome.select(tr), X.select_rows(va),
                   g.outcome.select(va), {.max_epochs = 512, .patience = 10, .seed = 1});
  const auto nn_c = eval::concordance_index(log_risk(out, xte), yte.duration, yte.event);
  CHECK(nn_c >= cox_c - 0.02);
}

TEST_CASE("no baseline hazard means zero risk") {
  auto m = build_network(linear_config(), 2, 1);
  m.baseline_cumhaz = {};
  m.max_time = 10.0;
  std::vector<double> x{1.0, 2.0};
  CHECK(predict_risk(m, x).risk == 0.0);
}

TEST_CASE("frozen linear layer with cox weights predicts the cox risk") {
  synth::GeneratorSpec spec;
  spec.n = 800;
  spec.beta = {0.7, -0.3};
  spec.seed = 19;
  const auto g = synth::generate(spec);
  const auto fit = cox::fit_cox(g.design.values, g.outcome);
  auto m = build_network(linear_config(), 2, 1);
  m.params = {fit.beta[0], fit.beta[1], 0.0};
  fit_baseline(m, g.design.values, g.outcome);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto row = g.design.values.row(i);
    CHECK(predict_risk(m, row).risk == doctest::Approx(cox::predict_risk(fit, row).risk).epsilon(1e-12));
  }
}
