#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "ncal/version_space.hpp"

using namespace ncal;
using Catch::Approx;

namespace {

RealFn constant(double c) {
  return [c](const Point&) { return c; };
}
Classifier constant_cls(int c) {
  return [c](const Point&) { return c; };
}
Classifier threshold_cls(double t) {
  return [t](const Point& x) { return x[0] >= t ? 1 : -1; };
}

QueryLog log_of(const std::vector<std::pair<double, double>>& xy) {
  QueryLog log;
  log.mark_epoch(0);
  std::uint64_t t = 0;
  for (auto [x, y] : xy) log.append_queried(++t, {x}, y, 1);
  return log;
}

// Brute-force extremum of f(x) over the square-risk level set.
ConfidenceInterval brute_level_set(const HypothesisPool& pool, const std::vector<WeightedExample>& ex, double beta,
                                   const Point& x) {
  double best = INFINITY;
  for (const auto& f : pool.members) best = std::min(best, sq_risk(f, ex));
  ConfidenceInterval ci{INFINITY, -INFINITY};
  for (const auto& f : pool.members)
    if (sq_risk(f, ex) <= best + beta) {
      ci.lcb = std::min(ci.lcb, f(x));
      ci.ucb = std::max(ci.ucb, f(x));
    }
  return ci;
}

}  // namespace

TEST_CASE("query log bookkeeping", "[version_space]") {
  QueryLog log;
  REQUIRE_THROWS_AS(log.mark_epoch(2), std::logic_error);
  log.mark_epoch(0);
  log.append_unqueried(1, {0.1}, 1);
  log.append_queried(2, {0.2}, 1.0, 1);
  log.mark_epoch(2);
  log.append_queried(3, {0.3}, 0.0, 2);
  log.append_queried(4, {0.4}, 0.5, 2);
  REQUIRE_THROWS_AS(log.mark_epoch(2), std::logic_error);
  REQUIRE_THROWS_AS(log.append_queried(4, {0.5}, 1.0, 2), std::logic_error);
  REQUIRE(log.queries() == 3);
  REQUIRE(log.queries_upto(0) == 0);
  REQUIRE(log.queries_upto(2) == 1);
  REQUIRE(log.queries_upto(100) == 3);
  REQUIRE(log.entries()[3].y_pm == 1);  // tie at 1/2 goes to +1
  REQUIRE(log.entries()[2].y_pm == -1);
  const auto ex = log.examples(3);
  REQUIRE(ex.size() == 2);
  REQUIRE(ex[1].target == 0.0);
  REQUIRE(ex[1].weight == 1.0);

  const auto csv = log.to_csv();
  REQUIRE(csv.rfind("t,x,queried,y01,epoch\n", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("empirical_01_risk examples", "[version_space]") {
  REQUIRE(empirical_01_risk(constant_cls(1), QueryLog{}, 10) == 0);
  const auto log = log_of({{0.1, 1.0}, {0.2, 0.0}, {0.3, 0.0}});
  REQUIRE(empirical_01_risk(constant_cls(1), log, 3) == 2);
  REQUIRE(empirical_01_risk(constant_cls(1), log, 1) == 0);
  REQUIRE(empirical_01_risk(threshold_cls(0.15) /* wrong way round on purpose */, log, 3) == 3);
  const Classifier copy = [](const Point& x) { return x[0] < 0.15 ? 1 : -1; };
  REQUIRE(empirical_01_risk(copy, log, 3) == 0);
}

TEST_CASE("empirical_sq_risk examples", "[version_space]") {
  REQUIRE(empirical_sq_risk(constant(0.5), QueryLog{}, 5) == 0.0);
  const auto log = log_of({{0.1, 0.0}, {0.2, 1.0}});
  REQUIRE(empirical_sq_risk(constant(0.5), log, 2) == Approx(0.5).margin(1e-15));
  REQUIRE(empirical_sq_risk([](const Point& x) { return x[0] < 0.15 ? 0.0 : 1.0; }, log, 2) == 0.0);
}

TEST_CASE("erm_regressor examples", "[version_space]") {
  HypothesisPool p01{{constant(0.0), constant(1.0)}};
  REQUIRE(erm_regressor(p01, QueryLog{}, 0) == 0);
  REQUIRE(erm_regressor(p01, log_of({{0.3, 1.0}}), 1) == 1);
  HypothesisPool tie{{constant(0.4), constant(0.6)}};
  REQUIRE(erm_regressor(tie, log_of({{0.3, 0.5}}), 1) == 0);
  std::vector<std::size_t> only_second{1};
  REQUIRE(erm_regressor(tie, log_of({{0.3, 0.5}}), 1, &only_second) == 1);
}

TEST_CASE("active_set_regressors examples", "[version_space]") {
  // risks on one target y = 0: c^2
  HypothesisPool p{{constant(std::sqrt(0.1)), constant(std::sqrt(0.3)), constant(std::sqrt(0.9))}};
  const auto log = log_of({{0.5, 0.0}});
  const auto a = active_set_regressors(p, log, 1, 0.25);
  REQUIRE(a.live == std::vector<std::size_t>{0, 1});
  REQUIRE(a.threshold_used == Approx(0.35).margin(1e-12));
  REQUIRE(active_set_regressors(p, log, 1, 0.0).live == std::vector<std::size_t>{0});
  REQUIRE(active_set_regressors(p, log, 1, 1e9).size() == 3);

  ActiveSet prev;
  prev.live = {1, 2};
  const auto b = active_set_regressors(p, log, 1, 1e9, &prev);
  REQUIRE(b.live == prev.live);
  // the minimum is taken over the previous live set
  REQUIRE(active_set_regressors(p, log, 1, 0.0, &prev).live == std::vector<std::size_t>{1});
}

TEST_CASE("active_set_classifiers examples", "[version_space]") {
  // risks 2, 3, 7 from constant-sign members on a crafted log
  std::vector<std::pair<double, double>> xy;
  for (int i = 0; i < 7; ++i) xy.push_back({0.01 * i, 0.0});
  const auto log = log_of(xy);
  // member k errs on the first r_k points
  auto errs_on_first = [](int r) { return [r](const Point& x) { return x[0] < 0.01 * r - 0.005 ? 1 : -1; }; };
  ClassifierPool p{{errs_on_first(2), errs_on_first(3), errs_on_first(7)}};
  REQUIRE(risks_01(p, log, 7) == std::vector<double>{2, 3, 7});
  REQUIRE(active_set_classifiers(p, log, 7, 2.0).live == std::vector<std::size_t>{0, 1});
  REQUIRE(active_set_classifiers(p, log, 7, 0.0).live == std::vector<std::size_t>{0});

  ClassifierPool same{{constant_cls(1), constant_cls(1), constant_cls(1)}};
  REQUIRE(active_set_classifiers(same, log, 7, 0.0).size() == 3);
  REQUIRE_THROWS_AS(active_set_from_risks({1.0}, -1.0, {0}), std::invalid_argument);
}

TEST_CASE("pool_bounds and in_disagreement", "[version_space]") {
  HypothesisPool p{{constant(0.2), constant(0.6), [](const Point& x) { return x[0]; }}};
  ActiveSet one;
  one.live = {2};
  const auto s = pool_bounds(p, one, {0.37});
  REQUIRE(s.lcb == 0.37);
  REQUIRE(s.ucb == 0.37);
  ActiveSet two;
  two.live = {0, 1};
  const auto c = pool_bounds(p, two, {0.9});
  REQUIRE(c.lcb == 0.2);
  REQUIRE(c.ucb == 0.6);
  REQUIRE(c.width() == Approx(0.4));

  ClassifierPool cp{{constant_cls(1), constant_cls(-1), threshold_cls(0.3), threshold_cls(0.6)}};
  ActiveSet single;
  single.live = {2};
  REQUIRE_FALSE(in_disagreement(cp, single, {0.5}));
  ActiveSet pm;
  pm.live = {0, 1};
  for (double x : {0.0, 0.4, 1.0}) REQUIRE(in_disagreement(cp, pm, {x}));
  ActiveSet th;
  th.live = {2, 3};
  REQUIRE(in_disagreement(cp, th, {0.5}));
  REQUIRE_FALSE(in_disagreement(cp, th, {0.1}));
  REQUIRE_FALSE(in_disagreement(cp, th, {0.9}));
}

TEST_CASE("as_classifiers thresholds at one half with ties to +1", "[version_space]") {
  HypothesisPool p{{constant(0.5), constant(0.49)}};
  const auto c = as_classifiers(p);
  REQUIRE(c.members[0]({0.0}) == 1);
  REQUIRE(c.members[1]({0.0}) == -1);
}

TEST_CASE("pool_oracle is an exact weighted argmin", "[version_space]") {
  HypothesisPool p{{constant(0.0), constant(0.5), constant(1.0)}};
  std::size_t idx = 99;
  const auto o = pool_oracle(p, &idx);
  o({{1.0, {0.1}, 0.9}});
  REQUIRE(idx == 2);
  o({{1.0, {0.1}, 0.0}, {1.0, {0.1}, 1.0}});
  // risks 1, 0.5, 1: middle member
  REQUIRE(idx == 1);
  o({});
  REQUIRE(idx == 0);
}

TEST_CASE("oracle_bound examples", "[version_space]") {
  const Point x{0.4};
  HypothesisPool single{{[](const Point& z) { return 0.3 + z[0]; }}};
  for (auto dir : {BoundDirection::lower, BoundDirection::upper})
    REQUIRE(oracle_bound(dir, x, {{1.0, {0.1}, 0.2}}, 0.5, 0.01, pool_oracle(single)).value == Approx(0.7));

  HypothesisPool three{{constant(0.1), constant(0.5), constant(0.8)}};
  const std::vector<WeightedExample> data{{1.0, {0.2}, 0.5}};
  const auto lo = oracle_bound(BoundDirection::lower, x, data, 1e6, 0.01, pool_oracle(three));
  const auto hi = oracle_bound(BoundDirection::upper, x, data, 1e6, 0.01, pool_oracle(three));
  REQUIRE(lo.value == 0.1);
  REQUIRE(hi.value == 0.8);
  // call count: one ERM fit plus ceil(log2(1/iota)) pulls
  REQUIRE(hi.oracle_calls == 1 + 7);

  REQUIRE(oracle_bound(BoundDirection::upper, x, data, 0.0, 0.01, pool_oracle(three)).value == 0.5);
  REQUIRE_THROWS_AS(oracle_bound(BoundDirection::upper, x, data, 0.1, 0.0, pool_oracle(three)), std::invalid_argument);
}

TEST_CASE("refined oracle_bound matches the explicit level set on random pools", "[version_space]") {
  Stream rng(101);
  OracleBoundOptions opt;
  opt.refine = true;
  for (int trial = 0; trial < 200; ++trial) {
    HypothesisPool p;
    const std::size_t n = 2 + rng.index(12);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = rng.uniform(-1, 1), b = rng.uniform(0, 1);
      p.members.push_back([a, b](const Point& z) { return std::clamp(b + a * (z[0] - 0.5), 0.0, 1.0); });
    }
    std::vector<WeightedExample> data;
    for (std::size_t i = 0, m = rng.index(15); i < m; ++i) data.push_back({1.0, {rng.uniform()}, rng.bernoulli(0.5) ? 1.0 : 0.0});
    const double beta = rng.uniform(0.0, 2.0);
    const Point x{rng.uniform()};
    const auto truth = brute_level_set(p, data, beta, x);
    const auto lo = oracle_bound(BoundDirection::lower, x, data, beta, 0.01, pool_oracle(p), opt);
    const auto hi = oracle_bound(BoundDirection::upper, x, data, beta, 0.01, pool_oracle(p), opt);
    REQUIRE(lo.value == Approx(truth.lcb).margin(1e-8));
    REQUIRE(hi.value == Approx(truth.ucb).margin(1e-8));
  }
}

TEST_CASE("unrefined oracle_bound never leaves the level set", "[version_space]") {
  Stream rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    HypothesisPool p;
    for (int i = 0; i < 8; ++i) p.members.push_back(constant(rng.uniform()));
    std::vector<WeightedExample> data;
    for (int i = 0; i < 5; ++i) data.push_back({1.0, {rng.uniform()}, rng.uniform()});
    const double beta = rng.uniform(0.0, 0.5);
    const Point x{0.5};
    const auto truth = brute_level_set(p, data, beta, x);
    const double lo = oracle_bound(BoundDirection::lower, x, data, beta, 0.05, pool_oracle(p)).value;
    const double hi = oracle_bound(BoundDirection::upper, x, data, beta, 0.05, pool_oracle(p)).value;
    REQUIRE(lo >= truth.lcb - 1e-12);
    REQUIRE(hi <= truth.ucb + 1e-12);
    REQUIRE(lo <= hi);
  }
}
