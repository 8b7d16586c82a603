#pragma once
// Query logs, empirical risks, active-set elimination, confidence bounds and
// disagreement-region membership over a finite hypothesis pool.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncal/core.hpp"
#include "ncal/nets.hpp"

namespace ncal {

struct LogEntry {
  std::uint64_t t = 0;
  Point x;
  bool queried = false;
  double y01 = 0.0;  // meaningful only when queried
  int y_pm = 0;      // +1/-1 when queried, 0 otherwise
  std::size_t epoch = 0;
};

class QueryLog {
 public:
  const std::vector<LogEntry>& entries() const { return entries_; }
  const std::vector<std::uint64_t>& epoch_marks() const { return marks_; }

  void mark_epoch(std::uint64_t tau) {
    if (!marks_.empty() && tau <= marks_.back()) throw std::logic_error("QueryLog: epoch marks must increase");
    if (marks_.empty() && tau != 0) throw std::logic_error("QueryLog: first epoch mark must be 0");
    marks_.push_back(tau);
  }

  void append_unqueried(std::uint64_t t, Point x, std::size_t epoch) {
    check_order(t);
    entries_.push_back({t, std::move(x), false, 0.0, 0, epoch});
  }

  // y01 is the regression target; y_pm its sign (ties at 1/2 go to +1).
  void append_queried(std::uint64_t t, Point x, double y01, std::size_t epoch) {
    check_order(t);
    entries_.push_back({t, std::move(x), true, y01, y01 >= 0.5 ? 1 : -1, epoch});
    ++queries_;
  }

  std::size_t queries() const { return queries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t queries_upto(std::uint64_t upto_t) const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
      if (e.t > upto_t) break;
      n += e.queried;
    }
    return n;
  }

  // Queried prefix as unit-weight regression examples.
  std::vector<WeightedExample> examples(std::uint64_t upto_t) const {
    std::vector<WeightedExample> ex;
    for (const auto& e : entries_) {
      if (e.t > upto_t) break;
      if (e.queried) ex.push_back({1.0, e.x, e.y01});
    }
    return ex;
  }

  void write_csv(std::ostream& os) const {
    os << "t,x,queried,y01,epoch\n";
    for (const auto& e : entries_) {
      os << e.t << ',';
      for (std::size_t i = 0; i < e.x.size(); ++i) os << (i ? ";" : "") << fmt17(e.x[i]);
      os << ',' << (e.queried ? 1 : 0) << ',';
      if (e.queried) os << fmt17(e.y01);
      os << ',' << e.epoch << '\n';
    }
  }

  std::string to_csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
  }

 private:
  void check_order(std::uint64_t t) const {
    if (!entries_.empty() && t <= entries_.back().t) throw std::logic_error("QueryLog: entries must be ordered by t");
  }
  std::vector<LogEntry> entries_;
  std::vector<std::uint64_t> marks_;
  std::size_t queries_ = 0;
};

inline std::size_t empirical_01_risk(const Classifier& h, const QueryLog& log, std::uint64_t upto_t) {
  std::size_t r = 0;
  for (const auto& e : log.entries()) {
    if (e.t > upto_t) break;
    if (e.queried && h(e.x) != e.y_pm) ++r;
  }
  return r;
}

inline double empirical_sq_risk(const RealFn& f, const QueryLog& log, std::uint64_t upto_t) {
  double r = 0.0;
  for (const auto& e : log.entries()) {
    if (e.t > upto_t) break;
    if (e.queried) {
      const double d = f(e.x) - e.y01;
      r += d * d;
    }
  }
  return r;
}

inline double sq_risk(const RealFn& f, const std::vector<WeightedExample>& ex) {
  double r = 0.0;
  for (const auto& e : ex) {
    const double d = f(e.x) - e.target;
    r += e.weight * d * d;
  }
  return r;
}

struct HypothesisPool {
  std::vector<RealFn> members;
  std::uint64_t capacity_pdim = 1;
  std::uint64_t capacity_vcdim = 1;
  std::optional<double> lipschitz_L;
  std::optional<double> approx_kappa;
  std::optional<std::size_t> eta_index;  // member equal to eta, when known by construction

  std::size_t size() const { return members.size(); }
  void validate() const {
    if (members.empty()) throw std::invalid_argument("HypothesisPool: empty pool");
  }
};

struct ClassifierPool {
  std::vector<Classifier> members;
  std::uint64_t vcdim = 1;

  std::size_t size() const { return members.size(); }
};

// Plug-in classifiers sgn(2f - 1) of a regression pool.
inline ClassifierPool as_classifiers(const HypothesisPool& pool) {
  ClassifierPool c;
  c.vcdim = pool.capacity_vcdim;
  for (const auto& f : pool.members) c.members.push_back([f](const Point& x) { return sign_pm(2.0 * f(x) - 1.0); });
  return c;
}

struct ActiveSet {
  std::vector<std::size_t> live;  // sorted pool indices
  double threshold_used = 0.0;
  std::size_t erm = 0;

  bool contains(std::size_t i) const { return std::binary_search(live.begin(), live.end(), i); }
  std::size_t size() const { return live.size(); }
};

inline ActiveSet full_active_set(std::size_t n) {
  ActiveSet a;
  a.live.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.live[i] = i;
  a.threshold_used = std::numeric_limits<double>::infinity();
  return a;
}

// Live = {i in candidates : risk_i <= min_candidates risk + slack}. Candidates is
// the previous live set, so nesting holds by construction and the minimizer
// (lowest index on ties) always survives.
inline ActiveSet active_set_from_risks(const std::vector<double>& risks, double slack,
                                       const std::vector<std::size_t>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("active_set_from_risks: empty candidate set");
  if (!(slack >= 0.0)) throw std::invalid_argument("active_set_from_risks: slack must be >= 0");
  ActiveSet a;
  a.erm = candidates.front();
  for (auto i : candidates)
    if (risks.at(i) < risks[a.erm]) a.erm = i;
  a.threshold_used = risks[a.erm] + slack;
  for (auto i : candidates)
    if (risks[i] <= a.threshold_used) a.live.push_back(i);
  return a;
}

inline std::vector<double> sq_risks(const HypothesisPool& pool, const QueryLog& log, std::uint64_t upto_t) {
  const auto ex = log.examples(upto_t);
  std::vector<double> r(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) r[i] = sq_risk(pool.members[i], ex);
  return r;
}

inline std::vector<double> risks_01(const ClassifierPool& pool, const QueryLog& log, std::uint64_t upto_t) {
  std::vector<double> r(pool.size(), 0.0);
  for (const auto& e : log.entries()) {
    if (e.t > upto_t) break;
    if (!e.queried) continue;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (pool.members[i](e.x) != e.y_pm) r[i] += 1.0;
  }
  return r;
}

// Lowest-index empirical square-risk minimizer, over `candidates` when given.
inline std::size_t erm_regressor(const HypothesisPool& pool, const QueryLog& log, std::uint64_t upto_t,
                                 const std::vector<std::size_t>* candidates = nullptr) {
  pool.validate();
  const auto r = sq_risks(pool, log, upto_t);
  const auto all = full_active_set(pool.size()).live;
  const auto& c = candidates ? *candidates : all;
  return active_set_from_risks(r, 0.0, c).erm;
}

inline ActiveSet active_set_regressors(const HypothesisPool& pool, const QueryLog& log, std::uint64_t upto_t,
                                       double beta_m, const ActiveSet* previous = nullptr) {
  pool.validate();
  const auto r = sq_risks(pool, log, upto_t);
  return active_set_from_risks(r, beta_m, previous ? previous->live : full_active_set(pool.size()).live);
}

inline ActiveSet active_set_classifiers(const ClassifierPool& pool, const QueryLog& log, std::uint64_t upto_t,
                                        double slack, const ActiveSet* previous = nullptr) {
  if (pool.members.empty()) throw std::invalid_argument("active_set_classifiers: empty pool");
  const auto r = risks_01(pool, log, upto_t);
  return active_set_from_risks(r, slack, previous ? previous->live : full_active_set(pool.size()).live);
}

struct ConfidenceInterval {
  double lcb = 0.0;
  double ucb = 0.0;
  double width() const { return ucb - lcb; }
};

inline ConfidenceInterval pool_bounds(const HypothesisPool& pool, const ActiveSet& active, const Point& x) {
  if (active.live.empty()) throw std::invalid_argument("pool_bounds: empty live set");
  ConfidenceInterval ci{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (auto i : active.live) {
    const double v = pool.members[i](x);
    ci.lcb = std::min(ci.lcb, v);
    ci.ucb = std::max(ci.ucb, v);
  }
  return ci;
}

inline bool in_disagreement(const ClassifierPool& pool, const ActiveSet& active, const Point& x) {
  if (active.live.empty()) throw std::invalid_argument("in_disagreement: empty live set");
  const int first = pool.members[active.live.front()](x);
  for (auto i : active.live)
    if (pool.members[i](x) != first) return true;
  return false;
}

// argmin_f sum_i w_i (f(x_i) - y_i)^2 over some class.
using RegressionOracle = std::function<RealFn(const std::vector<WeightedExample>&)>;

// Exact oracle over a finite pool (lowest index on ties). Reports the chosen
// index through `last_index` when supplied.
inline RegressionOracle pool_oracle(const HypothesisPool& pool, std::size_t* last_index = nullptr) {
  pool.validate();
  return [&pool, last_index](const std::vector<WeightedExample>& ex) -> RealFn {
    std::size_t best = 0;
    double best_r = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const double r = sq_risk(pool.members[i], ex);
      if (r < best_r) {
        best_r = r;
        best = i;
      }
    }
    if (last_index) *last_index = best;
    return pool.members[best];
  };
}

inline RegressionOracle mlp_oracle(const MlpArchitecture& arch, const OracleConfig& cfg) {
  return [arch, cfg](const std::vector<WeightedExample>& ex) -> RealFn { return as_function(fit_weighted_sq(arch, ex, cfg)); };
}

enum class BoundDirection { lower, upper };

struct OracleBoundOptions {
  // Value-cell bisection after the lambda grid. Exact (to `resolution`) when the
  // oracle is an exact finite-pool argmin; pointless for SGD oracles.
  bool refine = false;
  double resolution = 1e-9;
  double data_scale = 1e-15;  // weight of the data term during refinement
  std::size_t refine_budget = 4096;
};

struct OracleBoundResult {
  double value = 0.0;
  std::size_t oracle_calls = 0;
};

// Approximates sup (upper) or inf (lower) of f(x) over {f : R(f) <= R(f_erm) + beta_m}
// through the regression oracle alone.
//
// Phase 1 is a Lagrangian grid: append a pull example (lambda_k, x, 1) for the
// upper bound, (lambda_k, x, 0) for the lower, with lambda_k = beta_m 2^k over
// ceil(log2(1/iota)) doublings, and keep the most extreme feasible value.
// The grid alone is not exact on non-convex finite classes, so refinement (when
// enabled) locates the extreme feasible value by nearest-value oracle calls:
// data down-weighted, a unit pull toward c, bisection over value cells.
inline OracleBoundResult oracle_bound(BoundDirection dir, const Point& x, const std::vector<WeightedExample>& data,
                                      double beta_m, double iota, const RegressionOracle& oracle,
                                      const OracleBoundOptions& opt = {}) {
  if (!(iota > 0.0)) throw std::invalid_argument("oracle_bound: iota must be positive");
  if (!(beta_m >= 0.0)) throw std::invalid_argument("oracle_bound: beta_m must be >= 0");
  const bool upper = dir == BoundDirection::upper;
  OracleBoundResult res;

  const RealFn erm = oracle(data);
  ++res.oracle_calls;
  const double budget = sq_risk(erm, data) + beta_m;
  const double tol = 1e-12 * std::max(1.0, budget);
  auto feasible = [&](const RealFn& f) { return sq_risk(f, data) <= budget + tol; };
  auto better = [&](double a, double b) { return upper ? a > b : a < b; };

  double best = erm(x);
  const std::uint64_t K = std::max<std::uint64_t>(1, ceil_tol(std::log2(1.0 / iota)));
  std::vector<WeightedExample> aug = data;
  aug.push_back({0.0, x, upper ? 1.0 : 0.0});
  const double lambda0 = std::max(beta_m, 1e-12);
  for (std::uint64_t k = 0; k < K; ++k) {
    aug.back().weight = std::ldexp(lambda0, static_cast<int>(k));
    const RealFn f = oracle(aug);
    ++res.oracle_calls;
    const double v = f(x);
    if (better(v, best) && feasible(f)) best = v;
  }

  if (opt.refine) {
    std::vector<WeightedExample> near = data;
    for (auto& e : near) e.weight *= opt.data_scale;
    near.push_back({1.0, x, 0.0});
    std::size_t calls = 0;
    bool exhausted = false;
    // Extreme feasible value in [a, b], searching the favourable side first.
    std::function<std::optional<double>(double, double)> search = [&](double a, double b) -> std::optional<double> {
      if (b < a) return std::nullopt;
      if (calls >= opt.refine_budget) {
        exhausted = true;
        return std::nullopt;
      }
      const double c = 0.5 * (a + b);
      near.back().target = c;
      const RealFn g = oracle(near);
      ++calls;
      const double u = g(x);
      if (std::abs(u - c) > 0.5 * (b - a) + opt.resolution) return std::nullopt;
      const double uu = std::clamp(u, a, b);
      if (upper) {
        if (auto r = search(uu + opt.resolution, b)) return r;
        if (feasible(g)) return u;
        return search(a, uu - opt.resolution);
      }
      if (auto r = search(a, uu - opt.resolution)) return r;
      if (feasible(g)) return u;
      return search(uu + opt.resolution, b);
    };
    // Values of interest lie beyond the Phase-1 best; the class output range is
    // not known a priori, so widen until a cell comes back empty.
    double span = 1.0;
    std::optional<double> found;
    for (int widen = 0; widen < 8 && !found && !exhausted; ++widen, span *= 4.0) {
      found = upper ? search(best, best + span) : search(best - span, best);
      if (!found) {
        // nothing feasible in this window; check whether anything lies beyond it
        near.back().target = upper ? best + 2.0 * span : best - 2.0 * span;
        const RealFn g = oracle(near);
        ++calls;
        if (upper ? g(x) <= best + span : g(x) >= best - span) break;
      }
    }
    res.oracle_calls += calls;
    if (found && better(*found, best)) best = *found;
  }
  res.value = best;
  return res;
}

}  // namespace ncal
