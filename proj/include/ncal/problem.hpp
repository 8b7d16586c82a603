#pragma once
// Simulated classification problems: marginal D_X, conditional probability eta,
// noise metadata, and the instance families used throughout the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncal/core.hpp"
#include "ncal/rng.hpp"

namespace ncal {

enum class LabelMode { bernoulli, conditional_expectation };

struct NoiseRegime {
  enum class Kind { none, tsybakov, massart };
  Kind kind = Kind::none;
  double beta = 0.0;  // tsybakov exponent
  double c = 1.0;     // tsybakov constant
  double tau0 = 0.0;  // massart margin

  static NoiseRegime none() { return {}; }
  static NoiseRegime tsybakov(double beta, double c) {
    if (!(beta >= 0.0)) throw std::invalid_argument("tsybakov: beta must be >= 0");
    if (!(c >= 1.0)) throw std::invalid_argument("tsybakov: c must be >= 1");
    return {Kind::tsybakov, beta, c, 0.0};
  }
  static NoiseRegime massart(double tau0) {
    if (!(tau0 > 0.0 && tau0 < 0.5)) throw std::invalid_argument("massart: tau0 must be in (0, 1/2)");
    return {Kind::massart, 0.0, 1.0, tau0};
  }
};

struct ConditionalProbability {
  RealFn eval;
  double lipschitz_const = std::numeric_limits<double>::infinity();
  std::string description;

  double operator()(const Point& x) const { return eval(x); }
};

struct Atom {
  Point x;
  double mass = 0.0;
};

struct MarginalDistribution {
  enum class Kind { continuous, finite_support };
  enum class Domain { unit_cube, unit_ball };

  Kind kind = Kind::continuous;
  Domain domain = Domain::unit_cube;
  std::size_t dim = 1;
  double radius = 1.0;  // ball radius when domain == unit_ball
  std::vector<Atom> support;
  std::vector<double> cumulative;  // prefix sums of support masses

  static MarginalDistribution uniform_cube(std::size_t d) {
    if (d == 0) throw std::invalid_argument("uniform_cube: d must be >= 1");
    MarginalDistribution m;
    m.kind = Kind::continuous;
    m.domain = Domain::unit_cube;
    m.dim = d;
    return m;
  }

  static MarginalDistribution finite(std::vector<Atom> atoms, Domain domain, double radius = 1.0) {
    if (atoms.empty()) throw std::invalid_argument("finite marginal: empty support");
    MarginalDistribution m;
    m.kind = Kind::finite_support;
    m.domain = domain;
    m.radius = radius;
    m.dim = atoms.front().x.size();
    double total = 0.0;
    for (const auto& a : atoms) {
      if (a.x.size() != m.dim) throw std::invalid_argument("finite marginal: mixed dimensions");
      if (!(a.mass >= 0.0)) throw std::invalid_argument("finite marginal: negative mass");
      total += a.mass;
      m.cumulative.push_back(total);
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("finite marginal: masses must sum to 1");
    m.support = std::move(atoms);
    return m;
  }

  bool is_finite() const { return kind == Kind::finite_support; }

  bool contains(const Point& x, double tol = 1e-12) const {
    if (x.size() != dim) return false;
    if (domain == Domain::unit_cube)
      return std::all_of(x.begin(), x.end(), [&](double v) { return v >= -tol && v <= 1.0 + tol; });
    return std::sqrt(dot(x, x)) <= radius + tol;
  }

  Point sample(Stream& rng) const {
    if (is_finite()) return support[sample_index(rng)].x;
    Point p(dim);
    if (domain == Domain::unit_cube) {
      for (auto& v : p) v = rng.uniform();
      return p;
    }
    // uniform in the ball: gaussian direction, radius r * U^{1/d}
    double n2 = 0.0;
    do {
      n2 = 0.0;
      for (auto& v : p) {
        v = rng.normal();
        n2 += v * v;
      }
    } while (n2 == 0.0);
    const double scale = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim)) / std::sqrt(n2);
    for (auto& v : p) v *= scale;
    return p;
  }

  std::size_t sample_index(Stream& rng) const {
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), support.size() - 1);
  }
};

// Serializable recipe for an instance; rebuilding from the same spec reproduces
// every sample bit-for-bit.
struct InstanceSpec {
  std::string kind;  // "tsybakov" | "massart" | "single_relu_hard"
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const InstanceSpec& s) {
  j = nlohmann::json{{"kind", s.kind}, {"params", s.params}, {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, InstanceSpec& s) {
  j.at("kind").get_to(s.kind);
  s.params = j.value("params", nlohmann::json::object());
  s.seed = j.value("seed", std::uint64_t{0});
}

struct ProblemInstance {
  std::size_t dim = 1;
  MarginalDistribution marginal;
  ConditionalProbability eta;
  NoiseRegime noise;
  double domain_radius = 1.0;
  LabelMode label_mode = LabelMode::bernoulli;
  InstanceSpec spec;

  bool finite_support() const { return marginal.is_finite(); }
};

struct LabeledExample {
  Point x;
  int y = 1;  // in {+1, -1}
  double y01() const { return y == 1 ? 1.0 : 0.0; }
};

inline Point sample_point(const ProblemInstance& instance, Stream& rng) { return instance.marginal.sample(rng); }

// Regression target for a label query: Bernoulli(eta(x)) in {0,1}, or eta(x)
// itself in conditional-expectation mode.
inline double sample_label(const ProblemInstance& instance, const Point& x, Stream& rng) {
  const double p = instance.eta(x);
  if (instance.label_mode == LabelMode::conditional_expectation) return p;
  return rng.bernoulli(p) ? 1.0 : 0.0;
}

inline int label_pm(double y01) { return y01 >= 0.5 ? 1 : -1; }

inline int bayes_label(const ProblemInstance& instance, const Point& x) { return sign_pm(2.0 * instance.eta(x) - 1.0); }

// excess(h) = err(h) - err(h*). Exact on finite support; Monte-Carlo otherwise.
inline double bayes_excess_error(const ProblemInstance& instance, const Classifier& h, std::size_t n_mc, Stream& rng) {
  auto pointwise = [&](const Point& x) {
    const double p = instance.eta(x);
    const int hs = sign_pm(2.0 * p - 1.0);
    return h(x) != hs ? std::abs(2.0 * p - 1.0) : 0.0;
  };
  if (instance.finite_support()) {
    double s = 0.0;
    for (const auto& a : instance.marginal.support) s += a.mass * pointwise(a.x);
    return s;
  }
  if (n_mc == 0) throw std::invalid_argument("bayes_excess_error: n_mc must be positive on a continuous instance");
  double s = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) s += pointwise(sample_point(instance, rng));
  return s / static_cast<double>(n_mc);
}

// Tsybakov family on uniform [0,1]^d, acting on the first coordinate:
//   eta(x) = 1/2 + sgn(x-1/2) |x-1/2|^{1/beta} / 2         (beta > 0)
//   eta(x) = x                                             (beta = 0)
// Margin profile P(|eta-1/2| <= t) = min(1, 2 (2t)^beta), i.e. c = 2^{1+beta}.
inline ProblemInstance make_tsybakov_instance(double beta, std::size_t d, std::uint64_t seed = 0) {
  if (!(beta >= 0.0)) throw std::invalid_argument("make_tsybakov_instance: beta must be >= 0");
  if (d == 0) throw std::invalid_argument("make_tsybakov_instance: d must be >= 1");
  ProblemInstance inst;
  inst.dim = d;
  inst.marginal = MarginalDistribution::uniform_cube(d);
  inst.domain_radius = std::sqrt(static_cast<double>(d));
  inst.label_mode = LabelMode::bernoulli;
  if (beta == 0.0) {
    inst.eta = {[](const Point& x) { return std::clamp(x[0], 0.0, 1.0); }, 1.0, "eta(x)=x"};
    inst.noise = NoiseRegime::tsybakov(0.0, 1.0);
  } else {
    const double e = 1.0 / beta;
    inst.eta = {[e](const Point& x) {
                  const double u = x[0] - 0.5;
                  const double mag = std::pow(std::abs(u), e) / 2.0;
                  return std::clamp(u >= 0.0 ? 0.5 + mag : 0.5 - mag, 0.0, 1.0);
                },
                // derivative e/2 |u|^{e-1} is bounded by e/2 * (1/2)^{e-1} only when e >= 1
                e >= 1.0 ? e / 2.0 * std::pow(0.5, e - 1.0) : std::numeric_limits<double>::infinity(),
                "tsybakov beta-exponent family"};
    inst.noise = NoiseRegime::tsybakov(beta, std::pow(2.0, 1.0 + beta));
  }
  inst.spec = {"tsybakov", {{"beta", beta}, {"dim", d}}, seed};
  return inst;
}

// eta(x) = 1/2 + tau0 sgn(x_1 - 1/2) on uniform [0,1]^d (sgn(0) = +1).
inline ProblemInstance make_massart_instance(double tau0, std::size_t d, std::uint64_t seed = 0) {
  if (!(tau0 > 0.0 && tau0 < 0.5)) throw std::invalid_argument("make_massart_instance: tau0 must be in (0, 1/2)");
  if (d == 0) throw std::invalid_argument("make_massart_instance: d must be >= 1");
  ProblemInstance inst;
  inst.dim = d;
  inst.marginal = MarginalDistribution::uniform_cube(d);
  inst.domain_radius = std::sqrt(static_cast<double>(d));
  inst.label_mode = LabelMode::bernoulli;
  inst.eta = {[tau0](const Point& x) { return x[0] >= 0.5 ? 0.5 + tau0 : 0.5 - tau0; },
              std::numeric_limits<double>::infinity(), "massart step"};
  inst.noise = NoiseRegime::massart(tau0);
  inst.spec = {"massart", {{"tau0", tau0}, {"dim", d}}, seed};
  return inst;
}

// Same eta on a finite support: midpoints of n equal cells in 1-d, Halton points
// otherwise, all with mass 1/n. Used for exact excess and Chow-error arithmetic.
inline ProblemInstance discretize(const ProblemInstance& base, std::size_t n_atoms) {
  if (base.marginal.domain != MarginalDistribution::Domain::unit_cube || base.finite_support())
    throw std::invalid_argument("discretize: expects a continuous unit-cube instance");
  if (n_atoms == 0) throw std::invalid_argument("discretize: n_atoms must be positive");
  std::vector<Atom> atoms;
  atoms.reserve(n_atoms);
  for (auto& p : cube_probe_grid(base.dim, n_atoms)) atoms.push_back({std::move(p), 1.0 / static_cast<double>(n_atoms)});
  // renormalize the last cumulative entry exactly to 1
  ProblemInstance inst = base;
  double total = 0.0;
  for (const auto& a : atoms) total += a.mass;
  if (std::abs(total - 1.0) > 1e-12) throw std::logic_error("discretize: mass drift");
  inst.marginal = MarginalDistribution::finite(std::move(atoms), MarginalDistribution::Domain::unit_cube);
  inst.spec.params["atoms"] = n_atoms;
  return inst;
}

struct HardInstanceOptions {
  std::size_t proposal_budget = 1'000'000;
  std::size_t max_points = 16;    // size cap for the packing
  std::size_t patience = 20'000;  // consecutive rejections that count as saturation
};

struct HardInstance {
  ProblemInstance instance;
  std::size_t truth = 0;  // index of w* in packing
  std::vector<Point> packing;
  double gamma = 0.0;
  std::size_t target_size = 0;
};

inline std::size_t hard_instance_target_size(double gamma, std::size_t d) {
  return static_cast<std::size_t>(ceil_tol(std::pow(1.0 / (8.0 * gamma), static_cast<double>(d) / 2.0)));
}

// Packing on the unit sphere with pairwise inner products <= 1 - 4 gamma, built
// by greedy rejection sampling until saturation (or the size cap), with
//   eta(x) = ReLU(<w*, x> - (1 - 4 gamma)) + (1/2 - 2 gamma),  w* uniform on the packing.
inline HardInstance make_single_relu_hard_instance(double gamma, std::size_t d, Stream& rng,
                                                   const HardInstanceOptions& opt = {}) {
  if (!(gamma > 0.0 && gamma < 0.125)) throw std::invalid_argument("hard instance: gamma must be in (0, 1/8)");
  if (d < 2) throw std::invalid_argument("hard instance: d must be >= 2");
  HardInstance out;
  out.gamma = gamma;
  out.target_size = hard_instance_target_size(gamma, d);
  const double max_inner = 1.0 - 4.0 * gamma;

  std::size_t rejected_in_a_row = 0;
  for (std::size_t proposal = 0; proposal < opt.proposal_budget; ++proposal) {
    if (out.packing.size() >= opt.max_points) break;
    if (out.packing.size() >= out.target_size && rejected_in_a_row >= opt.patience) break;
    Point p(d);
    double n2 = 0.0;
    for (auto& v : p) {
      v = rng.normal();
      n2 += v * v;
    }
    if (n2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& v : p) v *= inv;
    const bool ok = std::all_of(out.packing.begin(), out.packing.end(),
                                [&](const Point& q) { return dot(p, q) <= max_inner; });
    if (ok) {
      out.packing.push_back(std::move(p));
      rejected_in_a_row = 0;
    } else {
      ++rejected_in_a_row;
    }
  }
  if (out.packing.size() < out.target_size)
    throw std::runtime_error("hard instance: packing target " + std::to_string(out.target_size) +
                             " not reached within the rejection budget (found " +
                             std::to_string(out.packing.size()) + ")");

  out.truth = static_cast<std::size_t>(rng.index(out.packing.size()));
  const Point wstar = out.packing[out.truth];
  std::vector<Atom> atoms;
  const double mass = 1.0 / static_cast<double>(out.packing.size());
  for (const auto& p : out.packing) atoms.push_back({p, mass});

  ProblemInstance& inst = out.instance;
  inst.dim = d;
  inst.marginal = MarginalDistribution::finite(std::move(atoms), MarginalDistribution::Domain::unit_ball, 1.0);
  inst.domain_radius = 1.0;
  inst.label_mode = LabelMode::conditional_expectation;
  inst.eta = {[wstar, max_inner, gamma](const Point& x) { return relu(dot(wstar, x) - max_inner) + (0.5 - 2.0 * gamma); },
              1.0, "single ReLU hard instance"};
  inst.noise = NoiseRegime::massart(std::min(2.0 * gamma, 0.499));
  inst.spec = {"single_relu_hard", {{"gamma", gamma}, {"dim", d}}, 0};
  return out;
}

// Regression function of packing member w, the pool element f_w.
inline RealFn hard_instance_member(const HardInstance& h, std::size_t w) {
  const Point wv = h.packing.at(w);
  const double max_inner = 1.0 - 4.0 * h.gamma;
  const double base = 0.5 - 2.0 * h.gamma;
  return [wv, max_inner, base](const Point& x) { return relu(dot(wv, x) - max_inner) + base; };
}

// Per-t estimate of P(|eta - 1/2| <= t): exact on finite support, Monte-Carlo
// (one shared sample) otherwise.
inline std::vector<std::pair<double, double>> estimate_noise_profile(const ProblemInstance& instance,
                                                                     const std::vector<double>& t_grid,
                                                                     std::size_t n_mc, Stream& rng) {
  if (t_grid.empty()) throw std::invalid_argument("estimate_noise_profile: empty grid");
  for (double t : t_grid)
    if (!(t > 0.0 && t <= 0.5)) throw std::invalid_argument("estimate_noise_profile: t must be in (0, 1/2]");
  std::vector<double> margins;
  std::vector<double> weights;
  if (instance.finite_support()) {
    for (const auto& a : instance.marginal.support) {
      margins.push_back(std::abs(instance.eta(a.x) - 0.5));
      weights.push_back(a.mass);
    }
  } else {
    if (n_mc == 0) throw std::invalid_argument("estimate_noise_profile: n_mc must be positive");
    for (std::size_t i = 0; i < n_mc; ++i) {
      margins.push_back(std::abs(instance.eta(sample_point(instance, rng)) - 0.5));
      weights.push_back(1.0 / static_cast<double>(n_mc));
    }
  }
  std::vector<std::pair<double, double>> out;
  for (double t : t_grid) {
    double s = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i)
      if (margins[i] <= t) s += weights[i];
    out.emplace_back(t, std::min(1.0, s));
  }
  return out;
}

// Probe points for invariant checks: the support itself when finite.
inline std::vector<Point> probe_points(const ProblemInstance& instance, std::size_t n = 10'000) {
  if (instance.finite_support()) {
    std::vector<Point> pts;
    for (const auto& a : instance.marginal.support) pts.push_back(a.x);
    return pts;
  }
  return cube_probe_grid(instance.dim, n);
}

inline ProblemInstance instance_from_spec(const InstanceSpec& spec, const HardInstanceOptions& hard_opt = {}) {
  if (spec.kind != "tsybakov" && spec.kind != "massart" && spec.kind != "single_relu_hard")
    throw std::invalid_argument("instance_from_spec: unknown kind '" + spec.kind + "'");
  const nlohmann::json p = spec.params.is_null() ? nlohmann::json::object() : spec.params;
  const std::size_t d = p.value("dim", std::size_t{1});
  ProblemInstance inst;
  if (spec.kind == "tsybakov") {
    inst = make_tsybakov_instance(p.at("beta").get<double>(), d, spec.seed);
  } else if (spec.kind == "massart") {
    inst = make_massart_instance(p.at("tau0").get<double>(), d, spec.seed);
  } else {
    Stream rng = Stream::derive(spec.seed, 0, Purpose::instance);
    inst = make_single_relu_hard_instance(p.at("gamma").get<double>(), d, rng, hard_opt).instance;
  }
  inst.spec.seed = spec.seed;
  if (const std::size_t atoms = p.value("atoms", std::size_t{0}); atoms > 0 && !inst.finite_support())
    inst = discretize(inst, atoms);
  return inst;
}

}  // namespace ncal
