#include <doctest.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <sstream>

#include "survwright/cox.hpp"
#include "survwright/selection.hpp"
#include "survwright/synth.hpp"

using namespace survwright;
using namespace survwright::selection;

namespace {

struct Split {
  DesignMatrix train, val;
  OutcomeColumn ytrain, yval;
};

Split make_split(const std::vector<double>& beta, std::size_t n, std::uint64_t seed) {
  synth::GeneratorSpec spec;
  spec.n = n;
  spec.beta = beta;
  spec.seed = seed;
  const auto g = synth::generate(spec);
  std::vector<std::size_t> tr, va;
  for (std::size_t i = 0; i < n; ++i) (i % 4 == 0 ? va : tr).push_back(i);
  return {g.design.select_rows(tr), g.design.select_rows(va), g.outcome.select(tr), g.outcome.select(va)};
}

std::vector<double> five_plus_noise(std::size_t noise) {
  std::vector<double> beta{0.5, -0.6, 0.7, -0.5, 0.8};
  beta.resize(5 + noise, 0.0);
  return beta;
}

bool informative(const std::string& name) {
  return name == "x0" || name == "x1" || name == "x2" || name == "x3" || name == "x4";
}

}  // namespace

TEST_CASE("univariate filter drops null features at about the nominal rate") {
  std::size_t dropped = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = make_split(std::vector<double>(50, 0.0), 2000, 100 + seed);
    const auto r = univariate_filter(s.train, s.ytrain);
    dropped += r.stage.removed.size();
    total += 50;
  }
  const double rate = static_cast<double>(dropped) / static_cast<double>(total);
  CHECK(rate > 0.98);
  CHECK(rate <= 1.0);
}

TEST_CASE("univariate filter keeps a strong feature and marks degenerate ones") {
  auto s = make_split({1.0, 0.0}, 2000, 3);
  for (std::size_t i = 0; i < s.train.rows(); ++i) s.train.values(i, 1) = 2.5;  // constant
  const auto r = univariate_filter(s.train, s.ytrain);
  CHECK(r.retained == std::vector<std::string>{"x0"});
  CHECK(r.stage.reasons.at("x1") == "degenerate");
  CHECK(!r.stage.p_values.at("x1").has_value());
  CHECK(*r.stage.p_values.at("x0") < 1e-10);
}

TEST_CASE("alpha boundary is strict") {
  const auto s = make_split({0.05, 0.0}, 800, 5);
  const auto probe = univariate_filter(s.train, s.ytrain, 1.0);
  const double p = *probe.stage.p_values.at("x0");
  const auto at = univariate_filter(s.train, s.ytrain, p);
  CHECK(std::count(at.retained.begin(), at.retained.end(), "x0") == 1);
  const auto below = univariate_filter(s.train, s.ytrain, std::nextafter(p, 0.0));
  CHECK(std::count(below.retained.begin(), below.retained.end(), "x0") == 0);
}

TEST_CASE("backward elimination recovers the informative features") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto s = make_split(five_plus_noise(45), 5000, seed);
    const auto r = backward_eliminate(s.train, s.ytrain, s.val, s.yval);
    const auto kept = std::count_if(r.retained.begin(), r.retained.end(), informative);
    const auto noise = static_cast<long>(r.retained.size()) - kept;
    INFO("seed " << seed << " kept " << r.retained.size());
    CHECK(kept >= 4);
    CHECK(noise <= 9);
    // every committed step respected the guard; the set only shrinks
    std::size_t width = 50;
    for (const auto& step : r.stage.steps) {
      if (step.committed) {
        CHECK(step.cindex_before - *step.cindex_after < kDefaultCindexTol);
        width -= step.candidates.size();
      }
    }
    CHECK(width == r.retained.size());
    CHECK(!r.stage.steps.back().committed);
    CHECK(r.stage.steps.back().batch_size == 1);
  }
}

TEST_CASE("no removal when every feature matters") {
  const auto s = make_split({1.0, -1.0, 0.9, -1.1}, 3000, 7);
  const auto r = backward_eliminate(s.train, s.ytrain, s.val, s.yval);
  CHECK(r.retained.size() == 4);
  CHECK(r.stage.removed.empty());
  for (const auto& step : r.stage.steps) CHECK(!step.committed);
}

TEST_CASE("backward elimination needs two features") {
  const auto s = make_split({1.0}, 200, 1);
  CHECK_THROWS_AS(backward_eliminate(s.train, s.ytrain, s.val, s.yval), Error);
}

TEST_CASE("exclusion list") {
  std::vector<std::string> fifty;
  for (int k = 0; k < 50; ++k) fifty.push_back("f" + std::to_string(k));
  CHECK(apply_exclusion_list(fifty, {}).retained == fifty);
  const auto r = apply_exclusion_list(fifty, {"f3", "f10", "f49"});
  CHECK(r.retained.size() == 47);
  CHECK(r.stage.removed == std::vector<std::string>{"f3", "f10", "f49"});
  CHECK(apply_exclusion_list(fifty, {"nonexistent"}).retained == fifty);

  std::istringstream file("# reviewed\nf3\n\n  f10  \nf49 # duplicate signal\n");
  CHECK(read_exclusion_list(file) == std::vector<std::string>{"f3", "f10", "f49"});
}

TEST_CASE("full pipeline trace") {
  const auto s = make_split(five_plus_noise(20), 4000, 11);
  SelectionOptions o;
  o.exclusions = {"x4"};
  const auto trace = select_features(s.train, s.ytrain, s.val, s.yval, o);
  REQUIRE(trace.stages.size() == 3);
  CHECK(trace.stages[0].stage == "univariate");
  CHECK(trace.stages[1].stage == "backward");
  CHECK(trace.stages[2].stage == "exclusion");
  CHECK(std::find(trace.final_features.begin(), trace.final_features.end(), "x4") == trace.final_features.end());

  // stages partition the removed features
  std::size_t removed = 0;
  for (const auto& st : trace.stages) removed += st.removed.size();
  CHECK(removed + trace.final_features.size() == trace.initial.size());
  for (const auto& f : trace.final_features) {
    CHECK(std::find(trace.initial.begin(), trace.initial.end(), f) != trace.initial.end());
  }

  const auto doc = to_json(trace);
  const auto back = selection_trace_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(to_json(back) == doc);
  const auto text = render_pipeline(trace);
  CHECK(text.rfind("25 -> (-", 0) == 0);
  CHECK(text.find("univariate)") != std::string::npos);
  CHECK(text.find("backward)") != std::string::npos);

  // determinism
  CHECK(to_json(select_features(s.train, s.ytrain, s.val, s.yval, o)) == doc);
}
