#pragma once
// Abstention-based active learning: confidence-band query and abstain rules over
// a square-loss version space, plus the coin-flip conversion to a standard
// classifier.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncal/core.hpp"
#include "ncal/metrics.hpp"
#include "ncal/nets.hpp"
#include "ncal/problem.hpp"
#include "ncal/rng.hpp"
#include "ncal/version_space.hpp"

namespace ncal {

struct NeuralCalPpSchedule {
  double epsilon = 0.1;
  double gamma = 0.2;
  double delta = 0.1;
  std::uint64_t pdim = 1;
  double theta_val = 1.0;
  double c0 = 1.0;
  std::uint64_t T = 0;
  std::uint64_t M = 0;
  double C_delta = 0.0;
  std::vector<double> beta;        // beta[1..M]; beta[0] unused
  std::vector<std::uint64_t> tau;  // tau[0..M]
};

inline NeuralCalPpSchedule neuralcalpp_schedule(double epsilon, double gamma, double delta, std::uint64_t pdim,
                                                double theta_val, double c0 = 1.0) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("neuralcalpp_schedule: epsilon must be in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("neuralcalpp_schedule: delta must be in (0, 1)");
  if (!(gamma > 0.0 && gamma < 0.5)) throw std::invalid_argument("neuralcalpp_schedule: gamma must be in (0, 1/2)");
  if (pdim < 1) throw std::invalid_argument("neuralcalpp_schedule: pdim must be >= 1");
  if (!(theta_val >= 1.0)) throw std::invalid_argument("neuralcalpp_schedule: theta_val must be >= 1");
  if (!(c0 >= 0.0)) throw std::invalid_argument("neuralcalpp_schedule: c0 must be >= 0");
  NeuralCalPpSchedule s;
  s.epsilon = epsilon;
  s.gamma = gamma;
  s.delta = delta;
  s.pdim = pdim;
  s.theta_val = theta_val;
  s.c0 = c0;
  s.T = ceil_tol(theta_val * static_cast<double>(pdim) / (epsilon * gamma));
  s.M = std::max<std::uint64_t>(1, ceil_tol(std::log2(static_cast<double>(s.T))));
  s.C_delta = c0 * static_cast<double>(pdim) * std::log2(static_cast<double>(s.T) / delta);
  s.beta.assign(s.M + 1, 0.0);
  for (std::uint64_t m = 1; m <= s.M; ++m) s.beta[m] = 3.0 * static_cast<double>(s.M - m + 1) * s.C_delta;
  s.tau.push_back(0);
  for (std::uint64_t m = 1; m <= s.M; ++m) s.tau.push_back(std::uint64_t{1} << m);
  return s;
}

// Largest kappa with (c * theta_bar * M^2 / gamma^2) kappa^2 <= 1/10, capped at
// gamma/4 (gamma/32 on the Lipschitz-filter path).
inline double kappa_for_horizon(double theta_bar, std::uint64_t M, double gamma, double c = 432.0,
                                bool lipschitz_path = false) {
  if (!(theta_bar > 0.0) || M == 0 || !(gamma > 0.0 && gamma < 0.5) || !(c > 0.0))
    throw std::invalid_argument("kappa_for_horizon: arguments out of range");
  const double Md = static_cast<double>(M);
  const double k = gamma / std::sqrt(10.0 * c * theta_bar * Md * Md);
  return std::min(k, lipschitz_path ? gamma / 32.0 : gamma / 4.0);
}

struct KappaOptions {
  double c_check = 432.0;  // constant of the kappa requirement
  bool lipschitz_path = false;
  double c_W = 1.0, c_L = 1.0, c_pdim = 1.0;  // sizing and capacity constants for M(kappa)
  std::size_t max_rounds = 10;
};

// Fixed point of kappa -> M(kappa) -> kappa, where M(kappa) is the horizon of
// the schedule whose pdim is the capacity bound of the kappa-sized network.
inline double choose_kappa(double epsilon, double gamma, double delta, double theta_bar, std::uint64_t M_guess,
                           unsigned alpha, std::size_t d, const KappaOptions& opt = {}) {
  if (!(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) || !(gamma > 0.0 && gamma < 0.5) ||
      !(theta_bar >= 1.0) || M_guess == 0 || alpha == 0 || d == 0)
    throw std::invalid_argument("choose_kappa: arguments out of range");
  std::uint64_t M = M_guess;
  double kappa = kappa_for_horizon(theta_bar, M, gamma, opt.c_check, opt.lipschitz_path);
  for (std::size_t round = 0; round < opt.max_rounds; ++round) {
    const auto sized = size_sobolev_arch(kappa, alpha, d, opt.c_W, opt.c_L);
    const auto W = std::max<std::uint64_t>(2, sized.arch.total_params());
    const auto pdim = std::max<std::uint64_t>(1, capacity_bound(W, sized.arch.depth(), opt.c_pdim));
    const auto next_M = neuralcalpp_schedule(epsilon, gamma, delta, pdim, theta_bar).M;
    if (next_M == M) break;
    M = next_M;
    kappa = kappa_for_horizon(theta_bar, M, gamma, opt.c_check, opt.lipschitz_path);
  }
  if (!(kappa > std::numeric_limits<double>::epsilon())) throw std::domain_error("choose_kappa: no feasible kappa");
  return kappa;
}

// Abstain iff [lcb - gamma/4, ucb + gamma/4] lies inside [1/2 - gamma, 1/2 + gamma];
// otherwise the sign of 2 f_erm(x) - 1, ties to +1.
inline Decision abstain_rule(const ConfidenceInterval& ci, double erm_value, double gamma) {
  const double q = gamma / 4.0;
  if (ci.lcb - q >= 0.5 - gamma && ci.ucb + q <= 0.5 + gamma) return Decision::abstain;
  return sign_pm(2.0 * erm_value - 1.0) == 1 ? Decision::positive : Decision::negative;
}

// 1(1/2 in (lcb - gamma/4, ucb + gamma/4)) * 1(decision != abstain).
inline bool query_rule(const ConfidenceInterval& ci, Decision d, double gamma) {
  const double q = gamma / 4.0;
  return ci.lcb - q < 0.5 && 0.5 < ci.ucb + q && d != Decision::abstain;
}

using BoundsFn = std::function<ConfidenceInterval(const Point&)>;

inline AbstainClassifier build_abstain_classifier(BoundsFn bounds, RealFn erm_value, double gamma,
                                                  std::size_t provenance = 0) {
  if (!(gamma > 0.0 && gamma < 0.5)) throw std::invalid_argument("build_abstain_classifier: gamma must be in (0, 1/2)");
  AbstainClassifier h;
  h.gamma = gamma;
  h.provenance = provenance;
  h.decide = [b = std::move(bounds), f = std::move(erm_value), gamma](const Point& x) {
    return abstain_rule(b(x), f(x), gamma);
  };
  return h;
}

struct QueryFunction {
  std::function<bool(const Point&)> query;
  bool operator()(const Point& x) const { return query(x); }
};

inline QueryFunction build_query_fn(BoundsFn bounds, AbstainClassifier h, double gamma) {
  if (!(gamma > 0.0 && gamma < 0.5)) throw std::invalid_argument("build_query_fn: gamma must be in (0, 1/2)");
  return {[b = std::move(bounds), h = std::move(h), gamma](const Point& x) { return query_rule(b(x), h(x), gamma); }};
}

// Standard classifier that predicts h(x) where h does not abstain and flips a
// fair coin from `rng` on every evaluation where it does.
inline Classifier randomize_abstention(AbstainClassifier h, Stream rng) {
  auto coin = std::make_shared<Stream>(rng);
  return [h = std::move(h), coin](const Point& x) {
    const Decision d = h(x);
    if (d != Decision::abstain) return static_cast<int>(d);
    return coin->bernoulli(0.5) ? 1 : -1;
  };
}

enum class CiMode { pool, oracle };

struct NeuralCalPpOptions {
  CiMode ci_mode = CiMode::pool;

  // audits over a fixed probe grid (pool mode only; oracle mode audits drawn points)
  bool audit_probes = true;
  std::size_t n_probe = 10'000;

  // oracle mode
  RegressionOracle oracle;  // when empty, built from arch + oracle_cfg
  MlpArchitecture arch;
  OracleConfig oracle_cfg;
  OracleBoundOptions bound_opt;
  std::optional<double> filter_L;  // Lipschitz filter of trained candidates
  double filter_kappa = 0.0;
  std::size_t filter_tries = 3;
};

struct NeuralCalPpEpoch {
  std::uint64_t epoch = 0;
  double beta_m = 0.0;
  std::size_t queries = 0;
  std::size_t cumulative_queries = 0;
  long long live_size = -1;
  std::size_t audit_violations = 0;
  // breakdown
  std::size_t width_violations = 0;
  std::size_t regret_violations = 0;
  std::size_t monotone_violations = 0;
  std::size_t nesting_violations = 0;
  std::size_t improper_abstentions = 0;
  std::size_t abstentions = 0;  // on the probe grid
  bool eta_live = false;
  std::size_t filter_failures = 0;
};

struct NeuralCalPpResult {
  AbstainClassifier classifier;  // h_M
  BoundsFn bounds;               // confidence band of epoch M
  RealFn erm;                    // f_M
  QueryLog log;
  std::vector<NeuralCalPpEpoch> trace;
  std::vector<ActiveSet> active_sets;  // F_1..F_M (pool mode)
  std::uint64_t unlabeled = 0;
  std::size_t queries = 0;
  std::size_t audit_violations = 0;
  bool eta_live_throughout = false;
  nlohmann::json serialized;  // mode tag + pool indices or network data + gamma
};

namespace detail {

// Retries the fit with shifted seeds until the result passes the (L, 2 kappa)
// filter; the last attempt is kept (and counted) when none does.
inline RegressionOracle filtered_mlp_oracle(const NeuralCalPpOptions& opt, const std::vector<std::pair<Point, Point>>& pairs,
                                            std::shared_ptr<std::size_t> failures) {
  return [arch = opt.arch, cfg = opt.oracle_cfg, L = opt.filter_L, kappa = opt.filter_kappa,
          tries = std::max<std::size_t>(1, opt.filter_tries), pairs, failures](const std::vector<WeightedExample>& ex) -> RealFn {
    OracleConfig c = cfg;
    RealFn f;
    for (std::size_t k = 0; k < tries; ++k) {
      c.seed = cfg.seed + k;
      f = as_function(fit_weighted_sq(arch, ex, c));
      if (!L || approx_lipschitz_ok(f, *L, kappa, pairs)) return f;
    }
    ++*failures;
    return f;
  };
}

}  // namespace detail

// One run in either CI mode. `draws` supplies x_t, `labels` the label noise.
inline NeuralCalPpResult run_neuralcalpp(const ProblemInstance& instance, const HypothesisPool* pool,
                                         const NeuralCalPpSchedule& s, const NeuralCalPpOptions& opt, Stream draws,
                                         Stream labels) {
  const double gamma = s.gamma;
  const bool pool_ci = opt.ci_mode == CiMode::pool;
  if (pool_ci) {
    if (!pool) throw std::invalid_argument("run_neuralcalpp: pool CI mode needs a pool");
    pool->validate();
    if (pool->approx_kappa && *pool->approx_kappa > gamma / 4.0)
      throw std::invalid_argument("run_neuralcalpp: pool approx_kappa exceeds gamma/4");
  }

  const std::vector<Point> probes =
      (pool_ci && opt.audit_probes) ? probe_points(instance, opt.n_probe) : std::vector<Point>{};
  auto filter_failures = std::make_shared<std::size_t>(0);
  RegressionOracle oracle = opt.oracle;
  if (!pool_ci && !oracle) {
    MlpArchitecture a = opt.arch;
    if (!a.clipped) a.clipped = true;  // preprocessing: clip every candidate
    NeuralCalPpOptions o = opt;
    o.arch = a;
    oracle = detail::filtered_mlp_oracle(o, probe_pairs_from(probe_points(instance, 256)), filter_failures);
  }

  NeuralCalPpResult r;
  r.eta_live_throughout = pool_ci && pool->eta_index.has_value();
  ActiveSet F = pool_ci ? full_active_set(pool->size()) : ActiveSet{};
  std::vector<char> prev_query;  // g_{m-1} on the probe grid
  std::uint64_t t = 0;

  for (std::uint64_t m = 1; m <= s.M; ++m) {
    const std::uint64_t upto = s.tau[m - 1];
    r.log.mark_epoch(upto);
    NeuralCalPpEpoch ep;
    ep.epoch = m;
    ep.beta_m = s.beta[m];
    const std::size_t failures_before = *filter_failures;

    BoundsFn bounds;
    RealFn erm;
    if (pool_ci) {
      const ActiveSet prevF = F;
      F = active_set_regressors(*pool, r.log, upto, s.beta[m], &prevF);
      for (auto i : F.live)
        if (!prevF.contains(i)) ++ep.nesting_violations;
      r.active_sets.push_back(F);
      ep.live_size = static_cast<long long>(F.size());
      ep.eta_live = pool->eta_index && F.contains(*pool->eta_index);
      erm = pool->members[F.erm];
      bounds = [pool, F](const Point& x) { return pool_bounds(*pool, F, x); };
    } else {
      const auto data = r.log.examples(upto);
      erm = oracle(data);
      const double iota_bar = gamma / (8.0 * static_cast<double>(s.M));
      const double iota_m = static_cast<double>(s.M - m) * gamma / (8.0 * static_cast<double>(s.M));
      const double beta_m = s.beta[m];
      bounds = [data, beta_m, iota_bar, iota_m, oracle, bopt = opt.bound_opt](const Point& x) {
        const double lo = oracle_bound(BoundDirection::lower, x, data, beta_m, iota_bar, oracle, bopt).value;
        const double hi = oracle_bound(BoundDirection::upper, x, data, beta_m, iota_bar, oracle, bopt).value;
        return ConfidenceInterval{lo - iota_m, hi + iota_m};
      };
    }
    if (!ep.eta_live) r.eta_live_throughout = false;
    AbstainClassifier h = build_abstain_classifier(bounds, erm, gamma, m);

    // pointwise audits; width threshold gamma/2 on exact bands, gamma/4 on offset bands
    const double width_floor = pool_ci ? gamma / 2.0 : gamma / 4.0;
    auto audit_point = [&](const Point& x, const ConfidenceInterval& ci, Decision d, bool g) {
      if (g && !(ci.width() > width_floor)) ++ep.width_violations;
      if (d == Decision::abstain) {
        const double e = instance.eta(x);
        if (!(e >= 0.5 - gamma && e <= 0.5 + gamma)) ++ep.improper_abstentions;
      }
      if (!g && ep.eta_live && pointwise_chow_excess(instance.eta(x), d, gamma) > 1e-12) ++ep.regret_violations;
    };
    if (!probes.empty()) {
      std::vector<char> q(probes.size());
      for (std::size_t i = 0; i < probes.size(); ++i) {
        const auto ci = bounds(probes[i]);
        const Decision d = abstain_rule(ci, erm(probes[i]), gamma);
        q[i] = query_rule(ci, d, gamma);
        ep.abstentions += d == Decision::abstain;
        audit_point(probes[i], ci, d, q[i]);
        if (!prev_query.empty() && q[i] > prev_query[i]) ++ep.monotone_violations;
      }
      prev_query.swap(q);
    }

    if (m == s.M) {
      // h_M is returned at the start of epoch M; improper abstentions only
      // count against the run when eta is live (the guarantee needs it)
      r.classifier = h;
      r.bounds = bounds;
      r.erm = erm;
    } else {
      for (; t < s.tau[m];) {
        ++t;
        Point x = sample_point(instance, draws);
        const auto ci = bounds(x);
        const Decision d = abstain_rule(ci, erm(x), gamma);
        const bool g = query_rule(ci, d, gamma);
        audit_point(x, ci, d, g);
        if (g) {
          const double y = sample_label(instance, x, labels);
          r.log.append_queried(t, std::move(x), y, m);
          ++ep.queries;
        } else {
          r.log.append_unqueried(t, std::move(x), m);
        }
      }
    }
    r.queries += ep.queries;
    ep.cumulative_queries = r.queries;
    ep.filter_failures = *filter_failures - failures_before;
    ep.audit_violations = ep.width_violations + ep.regret_violations + ep.monotone_violations + ep.nesting_violations +
                          (ep.eta_live ? ep.improper_abstentions : 0);
    r.audit_violations += ep.audit_violations;
    r.trace.push_back(ep);
  }
  r.unlabeled = t;

  if (pool_ci) {
    r.serialized = {{"mode", "pool"}, {"gamma", gamma}, {"live", F.live}, {"erm", F.erm}};
  } else {
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& e : r.log.examples(s.tau[s.M - 1])) ex.push_back({{"x", e.x}, {"y01", e.target}});
    r.serialized = {{"mode", "oracle"},
                    {"gamma", gamma},
                    {"beta_M", s.beta[s.M]},
                    {"iota_bar", gamma / (8.0 * static_cast<double>(s.M))},
                    {"arch", opt.arch},
                    {"oracle", opt.oracle_cfg},
                    {"examples", ex}};
  }
  return r;
}

}  // namespace ncal
