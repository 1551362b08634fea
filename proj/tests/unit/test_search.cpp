#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "survwright/error.hpp"
#include "survwright/search.hpp"
#include "survwright/synth.hpp"

using namespace survwright;
using namespace survwright::search;

namespace {

Splits make_splits(std::size_t n, std::uint64_t seed) {
  synth::GeneratorSpec spec;
  spec.n = n;
  spec.beta = {0.6, -0.4, 0.0};
  spec.seed = seed;
  const auto g = synth::generate(spec);
  std::vector<std::size_t> tr, va;
  for (std::size_t i = 0; i < n; ++i) (i % 4 == 0 ? va : tr).push_back(i);
  return {g.design.values.select_rows(tr), g.outcome.select(tr), g.design.values.select_rows(va),
          g.outcome.select(va), g.design.names};
}

}  // namespace

TEST_CASE("learning rate is log-uniform") {
  SearchSpace space;
  Rng rng(1);
  int below = 0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const auto c = sample_config(space, rng);
    CHECK(c.learning_rate >= 1e-5);
    CHECK(c.learning_rate <= 1.0);
    CHECK(c.dropout >= 0.0);
    CHECK(c.dropout <= 0.9);
    CHECK(c.weight_decay <= 20.0);
    CHECK(c.momentum <= 1.0);
    if (c.learning_rate < 1e-2) ++below;
  }
  const double expected = std::log(1e-2 / 1e-5) / std::log(1.0 / 1e-5);
  CHECK(expected == doctest::Approx(0.6));
  CHECK(std::abs(below / static_cast<double>(n) - expected) < 0.02);
}

TEST_CASE("every categorical value is reachable and sampling is seeded") {
  SearchSpace space;
  Rng a(5), b(5);
  std::set<std::string> topologies;
  std::set<int> acts;
  int bn = 0;
  for (int k = 0; k < 500; ++k) {
    const auto ca = sample_config(space, a);
    const auto cb = sample_config(space, b);
    CHECK(neural::to_json(ca) == neural::to_json(cb));
    topologies.insert(neural::topology_name(ca.topology));
    acts.insert(static_cast<int>(ca.activation));
    bn += ca.batch_norm;
  }
  CHECK(topologies.size() == 10);
  CHECK(acts.size() == 3);
  CHECK(bn > 150);
  CHECK(bn < 350);
}

TEST_CASE("invalid spaces are rejected") {
  SearchSpace space;
  space.dropout_max = 1.0;
  CHECK_THROWS_AS(space.validate(), Error);
  space = {};
  space.topologies = {"12y"};
  CHECK_THROWS_AS(space.validate(), Error);
  CHECK_THROWS_AS(run_search(SearchSpace{}, 0, make_splits(100, 1), 1), Error);
}

TEST_CASE("trial records round trip through the log") {
  TrialRecord ok;
  ok.trial = 3;
  ok.seed = 0xfeedfacecafebeefULL;
  ok.config.topology = {64, 16};
  ok.config.learning_rate = 0.000309;
  ok.val_loss = 4.123456789012345;
  ok.val_cindex = 0.7012345678901234;
  ok.epochs_run = 37;
  ok.wall_time = 1.25;
  TrialRecord bad = ok;
  bad.trial = 4;
  bad.val_loss.reset();
  bad.val_cindex.reset();
  bad.failure = "training loss became non-finite at epoch 2";
  std::stringstream ss;
  write_trial_log(ss, {ok, bad});
  const auto back = read_trial_log(ss);
  REQUIRE(back.size() == 2);
  CHECK(to_json(back[0]) == to_json(ok));
  CHECK(to_json(back[1]) == to_json(bad));
  CHECK(back[0].val_loss == ok.val_loss);
  CHECK(std::isinf(back[1].score()));
  CHECK(to_json(bad)["val_loss"].is_null());
}

TEST_CASE("search keeps the lowest validation loss and tolerates failures") {
  const auto data = make_splits(600, 2);
  SearchSpace space;
  SearchOptions opt;
  opt.max_epochs = 40;
  opt.patience = 5;
  std::stringstream log;
  opt.trial_log = &log;
  const auto r = run_search(space, 6, data, 9, opt);
  REQUIRE(r.trials.size() == 6);
  double best = INFINITY;
  for (const auto& t : r.trials) best = std::min(best, t.score());
  CHECK(r.trials[static_cast<std::size_t>(r.best_trial)].score() == best);
  CHECK(neural::to_json(r.best) == neural::to_json(r.trials[static_cast<std::size_t>(r.best_trial)].config));
  CHECK(read_trial_log(log).size() == 6);

  const auto one = run_search(space, 1, data, 9, opt);
  CHECK(one.best_trial == 0);
  CHECK(neural::to_json(one.best) == neural::to_json(one.trials[0].config));

  // prefix property: the first six trials of a longer search are the same
  const auto longer = run_search(space, 8, data, 9, opt);
  for (std::size_t t = 0; t < 6; ++t) {
    CHECK(neural::to_json(longer.trials[t].config) == neural::to_json(r.trials[t].config));
    CHECK(longer.trials[t].val_loss == r.trials[t].val_loss);
  }
  double best8 = INFINITY;
  for (const auto& t : longer.trials) best8 = std::min(best8, t.score());
  CHECK(best8 <= best);
}

TEST_CASE("all failing trials raise an error with the log") {
  auto data = make_splits(200, 3);
  std::fill(data.y_val.event.begin(), data.y_val.event.end(), 0);  // no validation events
  SearchOptions opt;
  opt.max_epochs = 5;
  CHECK_THROWS_WITH_AS(run_search(SearchSpace{}, 2, data, 1, opt), doctest::Contains("every trial failed"), Error);
}

TEST_CASE("best of twenty is at least the median trial") {
  const auto data = make_splits(800, 4);
  SearchOptions opt;
  opt.max_epochs = 60;
  opt.patience = 5;
  const auto r = run_search(SearchSpace{}, 20, data, 11, opt);
  std::vector<double> cs;
  for (const auto& t : r.trials) {
    if (t.val_cindex) cs.push_back(*t.val_cindex);
  }
  REQUIRE(!cs.empty());
  std::sort(cs.begin(), cs.end());
  CHECK(cs.back() >= cs[cs.size() / 2]);
  CHECK(*r.trials[static_cast<std::size_t>(r.best_trial)].val_cindex >= cs[cs.size() / 2]);
  const auto again = run_search(SearchSpace{}, 20, data, 11, opt);
  CHECK(again.best_trial == r.best_trial);
  CHECK(again.best_model.params == r.best_model.params);
}
