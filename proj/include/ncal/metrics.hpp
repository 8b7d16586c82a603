#pragma once
// Standard and Chow errors, pointwise Chow excess, disagreement-coefficient
// estimators, brute-force eluder dimension, covering-number bound.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncal/core.hpp"
#include "ncal/problem.hpp"
#include "ncal/rng.hpp"
#include "ncal/version_space.hpp"

namespace ncal {

// Probability that y disagrees with a hard prediction at a point with P(y=+1) = eta.
inline double prediction_error(double eta, int prediction) { return prediction == 1 ? 1.0 - eta : eta; }

// excess_gamma(h; x): P(y != h(x)) - min(eta, 1 - eta) when h(x) != abstain,
// (1/2 - gamma) - min(eta, 1 - eta) otherwise.
inline double pointwise_chow_excess(double eta, Decision d, double gamma) {
  const double bayes = std::min(eta, 1.0 - eta);
  if (d == Decision::abstain) return (0.5 - gamma) - bayes;
  return prediction_error(eta, static_cast<int>(d)) - bayes;
}

inline double pointwise_chow_excess(const ProblemInstance& instance, const AbstainClassifier& h, double gamma,
                                    const Point& x) {
  return pointwise_chow_excess(instance.eta(x), h(x), gamma);
}

namespace detail {

// E_x[g(x)] exactly on finite support, by Monte-Carlo otherwise.
template <class G>
double expectation(const ProblemInstance& instance, std::size_t n_mc, Stream& rng, G&& g) {
  if (instance.finite_support()) {
    double s = 0.0;
    for (const auto& a : instance.marginal.support) s += a.mass * g(a.x);
    return s;
  }
  if (n_mc == 0) throw std::invalid_argument("expectation: n_mc must be positive on a continuous instance");
  double s = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) s += g(sample_point(instance, rng));
  return s / static_cast<double>(n_mc);
}

}  // namespace detail

inline double bayes_error(const ProblemInstance& instance, std::size_t n_mc, Stream& rng) {
  return detail::expectation(instance, n_mc, rng, [&](const Point& x) {
    const double e = instance.eta(x);
    return std::min(e, 1.0 - e);
  });
}

inline double standard_error(const ProblemInstance& instance, const Classifier& h, std::size_t n_mc, Stream& rng) {
  return detail::expectation(instance, n_mc, rng, [&](const Point& x) { return prediction_error(instance.eta(x), h(x)); });
}

// err_gamma(h) = P(h != y, h != abstain) + (1/2 - gamma) P(h = abstain).
inline double chow_error(const ProblemInstance& instance, const AbstainClassifier& h, double gamma, std::size_t n_mc,
                         Stream& rng) {
  if (!(gamma > 0.0 && gamma < 0.5)) throw std::invalid_argument("chow_error: gamma must be in (0, 1/2)");
  return detail::expectation(instance, n_mc, rng, [&](const Point& x) {
    const Decision d = h(x);
    return d == Decision::abstain ? 0.5 - gamma : prediction_error(instance.eta(x), static_cast<int>(d));
  });
}

inline double chow_excess(const ProblemInstance& instance, const AbstainClassifier& h, double gamma, std::size_t n_mc,
                          Stream& rng) {
  return detail::expectation(instance, n_mc, rng,
                             [&](const Point& x) { return pointwise_chow_excess(instance.eta(x), h(x), gamma); });
}

inline double abstention_mass(const ProblemInstance& instance, const AbstainClassifier& h, std::size_t n_mc,
                              Stream& rng) {
  return detail::expectation(instance, n_mc, rng, [&](const Point& x) { return h(x) == Decision::abstain ? 1.0 : 0.0; });
}

// P(eta(x) in [1/2 - gamma, 1/2 + gamma]).
inline double band_mass(const ProblemInstance& instance, double gamma, std::size_t n_mc, Stream& rng) {
  return detail::expectation(instance, n_mc, rng, [&](const Point& x) {
    const double e = instance.eta(x);
    return (e >= 0.5 - gamma && e <= 0.5 + gamma) ? 1.0 : 0.0;
  });
}

// Expected error of the coin-flip conversion, averaging over the coin exactly:
// a fair coin errs with probability 1/2 whatever eta is.
inline double randomized_error(const ProblemInstance& instance, const AbstainClassifier& h, std::size_t n_mc,
                               Stream& rng) {
  return detail::expectation(instance, n_mc, rng, [&](const Point& x) {
    const Decision d = h(x);
    const double e = instance.eta(x);
    if (d != Decision::abstain) return prediction_error(e, static_cast<int>(d));
    return 0.5 * prediction_error(e, 1) + 0.5 * prediction_error(e, -1);
  });
}

// ----- disagreement coefficients ------------------------------------------

struct DisCoeffEstimate {
  double value = 1.0;
  double stderr_ = 0.0;  // of the grid cell attaining the max (0 when the floor wins)
  double eps0 = 0.0;     // eps0 or gamma0
  std::size_t mc_samples = 0;
  std::vector<double> grid;
  std::vector<double> cell_values;  // row-major over (gamma, eps) for the value coefficient
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const DisCoeffEstimate& e) {
  j = nlohmann::json{{"value", e.value}, {"stderr", e.stderr_},         {"eps0", e.eps0},
                     {"mc_samples", e.mc_samples}, {"grid", e.grid}, {"cell_values", e.cell_values},
                     {"seed", e.seed}};
}

inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0 && hi >= lo) || n == 0) throw std::invalid_argument("log_grid: need 0 < lo <= hi and n >= 1");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = n == 1 ? hi : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
  return g;
}

namespace detail {

struct Sample {
  std::vector<Point> xs;
  std::vector<double> w;  // weights summing to 1
  bool exact = false;
};

inline Sample draw_sample(const ProblemInstance& instance, std::size_t n_mc, Stream& rng) {
  Sample s;
  if (instance.finite_support()) {
    s.exact = true;
    for (const auto& a : instance.marginal.support) {
      s.xs.push_back(a.x);
      s.w.push_back(a.mass);
    }
    return s;
  }
  if (n_mc == 0) throw std::invalid_argument("dis coefficient: n_mc must be positive on a continuous instance");
  for (std::size_t i = 0; i < n_mc; ++i) s.xs.push_back(sample_point(instance, rng));
  s.w.assign(n_mc, 1.0 / static_cast<double>(n_mc));
  return s;
}

inline double bernoulli_se(double p, std::size_t n, bool exact) {
  return exact ? 0.0 : std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
}

}  // namespace detail

// sup_{eps in grid} P(DIS(B(center, eps))) / eps, floored at 1. One sample
// serves both the ball radii and the DIS mass.
inline DisCoeffEstimate estimate_classifier_dis_coeff(const ClassifierPool& pool, std::size_t center, double eps0,
                                                      const std::vector<double>& eps_grid, std::size_t n_mc,
                                                      const ProblemInstance& instance, Stream& rng) {
  if (eps_grid.empty()) throw std::invalid_argument("estimate_classifier_dis_coeff: empty grid");
  if (center >= pool.size()) throw std::invalid_argument("estimate_classifier_dis_coeff: center out of range");
  for (double e : eps_grid)
    if (!(e > eps0 && e <= 1.0)) throw std::invalid_argument("estimate_classifier_dis_coeff: grid must lie in (eps0, 1]");
  const auto s = detail::draw_sample(instance, n_mc, rng);
  const std::size_t n = s.xs.size();
  std::vector<std::vector<int>> pred(pool.size(), std::vector<int>(n));
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t k = 0; k < n; ++k) pred[i][k] = pool.members[i](s.xs[k]);
  std::vector<double> dist(pool.size(), 0.0);
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t k = 0; k < n; ++k)
      if (pred[i][k] != pred[center][k]) dist[i] += s.w[k];

  DisCoeffEstimate est;
  est.eps0 = eps0;
  est.mc_samples = s.exact ? 0 : n;
  est.grid = eps_grid;
  for (double eps : eps_grid) {
    std::vector<std::size_t> ball;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (dist[i] <= eps) ball.push_back(i);
    double p = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const int first = pred[ball.front()][k];
      for (auto i : ball)
        if (pred[i][k] != first) {
          p += s.w[k];
          break;
        }
    }
    const double v = p / eps;
    est.cell_values.push_back(v);
    if (v > est.value) {
      est.value = v;
      est.stderr_ = detail::bernoulli_se(p, n, s.exact) / eps;
    }
  }
  return est;
}

// sup over (gamma, eps) grids of (gamma^2 / eps^2) P(exists f: |f - f*|(x) > gamma,
// ||f - f*||_{D} <= eps), floored at 1, with D the supplied marginal only.
inline DisCoeffEstimate estimate_value_dis_coeff(const HypothesisPool& pool, std::size_t fstar, double gamma0,
                                                 const std::vector<double>& gamma_grid,
                                                 const std::vector<double>& eps_grid, std::size_t n_mc,
                                                 const ProblemInstance& instance, Stream& rng) {
  if (gamma_grid.empty() || eps_grid.empty()) throw std::invalid_argument("estimate_value_dis_coeff: empty grid");
  if (fstar >= pool.size()) throw std::invalid_argument("estimate_value_dis_coeff: fstar out of range");
  for (double g : gamma_grid)
    if (!(g > gamma0)) throw std::invalid_argument("estimate_value_dis_coeff: gamma grid must exceed gamma0");
  for (double e : eps_grid)
    if (!(e > 0.0)) throw std::invalid_argument("estimate_value_dis_coeff: eps grid must be positive");
  const auto s = detail::draw_sample(instance, n_mc, rng);
  const std::size_t n = s.xs.size();
  std::vector<std::vector<double>> gap(pool.size(), std::vector<double>(n));
  std::vector<double> norm(pool.size(), 0.0);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      gap[i][k] = std::abs(pool.members[i](s.xs[k]) - pool.members[fstar](s.xs[k]));
      norm[i] += s.w[k] * gap[i][k] * gap[i][k];
    }
    norm[i] = std::sqrt(norm[i]);
  }
  DisCoeffEstimate est;
  est.eps0 = gamma0;
  est.mc_samples = s.exact ? 0 : n;
  est.grid = gamma_grid;
  for (double g : gamma_grid)
    for (double eps : eps_grid) {
      double p = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < pool.size(); ++i)
          if (norm[i] <= eps && gap[i][k] > g) {
            p += s.w[k];
            break;
          }
      const double scale = g * g / (eps * eps);
      const double v = scale * p;
      est.cell_values.push_back(v);
      if (v > est.value) {
        est.value = v;
        est.stderr_ = scale * detail::bernoulli_se(p, n, s.exact);
      }
    }
  return est;
}

struct EluderResult {
  std::size_t length = 0;
  bool capped = false;  // true when the search hit max_len (length is then a lower bound)
};

// Longest x^1..x^m over candidate points (repeats allowed) such that each x^i has
// some f with |f - f*|(x^i) > gamma and sum_{j<i} (f - f*)(x^j)^2 <= gamma^2.
// Depth-first over the per-member accumulated squared gaps.
inline EluderResult eluder_dimension_bruteforce(const HypothesisPool& pool, std::size_t fstar, double gamma,
                                                const std::vector<Point>& candidates, std::size_t max_len) {
  if (fstar >= pool.size()) throw std::invalid_argument("eluder_dimension_bruteforce: fstar out of range");
  if (!(gamma > 0.0)) throw std::invalid_argument("eluder_dimension_bruteforce: gamma must be positive");
  const std::size_t P = pool.size(), C = candidates.size();
  std::vector<std::vector<double>> g(P, std::vector<double>(C));
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t c = 0; c < C; ++c) g[i][c] = pool.members[i](candidates[c]) - pool.members[fstar](candidates[c]);
  const double g2 = gamma * gamma;
  EluderResult best;
  std::vector<double> acc(P, 0.0);
  std::function<void(std::size_t)> dfs = [&](std::size_t depth) {
    if (depth > best.length) best.length = depth;
    if (best.length >= max_len) {
      best.capped = true;
      return;
    }
    for (std::size_t c = 0; c < C; ++c) {
      bool ok = false;
      for (std::size_t i = 0; i < P && !ok; ++i) ok = acc[i] <= g2 && std::abs(g[i][c]) > gamma;
      if (!ok) continue;
      for (std::size_t i = 0; i < P; ++i) acc[i] += g[i][c] * g[i][c];
      dfs(depth + 1);
      for (std::size_t i = 0; i < P; ++i) acc[i] -= g[i][c] * g[i][c];
      if (best.capped) return;
    }
  };
  dfs(0);
  return best;
}

// sup over a gamma grid (all > gamma0) of the single-scale length.
inline EluderResult eluder_dimension_sup(const HypothesisPool& pool, std::size_t fstar,
                                         const std::vector<double>& gamma_grid, const std::vector<Point>& candidates,
                                         std::size_t max_len) {
  EluderResult best;
  for (double g : gamma_grid) {
    const auto r = eluder_dimension_bruteforce(pool, fstar, g, candidates, max_len);
    if (r.length > best.length) best = r;
    best.capped = best.capped || r.capped;
  }
  return best;
}

// c (L r / kappa')^d.
inline double covering_theta_bound(double L, double r, double kappa_prime, std::size_t d, double c = 1.0) {
  if (!(L > 0.0 && r > 0.0 && kappa_prime > 0.0 && c > 0.0))
    throw std::invalid_argument("covering_theta_bound: arguments must be positive");
  return c * std::pow(L * r / kappa_prime, static_cast<double>(d));
}

}  // namespace ncal
