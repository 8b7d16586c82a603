#pragma once
// Exhaustive verifier for the single-ReLU hard instance: the best deterministic
// K-query learner against a uniform prior over w*, in exact rational arithmetic.

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "ncal/core.hpp"
#include "ncal/problem.hpp"
#include "ncal/rng.hpp"

namespace ncal {

using Rational = boost::multiprecision::number<boost::multiprecision::cpp_rational_backend, boost::multiprecision::et_off>;

// Exact value of a finite double.
inline Rational to_rational(double v) {
  if (!std::isfinite(v)) throw std::domain_error("to_rational: non-finite value");
  int e = 0;
  const double m = std::frexp(v, &e);  // v = m 2^e, |m| in [0.5, 1)
  const auto mant = static_cast<long long>(std::ldexp(m, 53));
  Rational r(mant);
  const int shift = e - 53;
  const Rational p2 = Rational(boost::multiprecision::cpp_int(1) << std::abs(shift));
  return shift >= 0 ? r * p2 : r / p2;
}

inline double to_double(const Rational& r) { return r.convert_to<double>(); }
inline std::string to_string(const Rational& r) { return r.str(); }

struct LowerBoundOptions {
  std::uint64_t seed = 0;
  HardInstanceOptions packing{1'000'000, 12, 20'000};
  std::size_t max_support = 20;  // bitmask DP limit
};

struct LowerBoundReport {
  double gamma = 0.0;
  std::size_t dim = 0;
  std::size_t n = 0;  // |X|
  std::size_t K = 0;
  Rational expected_excess;    // best deterministic K-query strategy, uniform prior
  Rational wrong_excess;       // excess of the plug-in classifier of any f_w, w != w*
  Rational claimed_wrong_excess; // gamma / (2n)
  Rational bound;              // (1/4) gamma / (2n)
  bool bound_holds = false;
  bool matches_claim = false;
  double min_pairwise_gap = 0.0;  // 1 - 4 gamma - max inner product
};

inline nlohmann::json to_json(const LowerBoundReport& r) {
  auto pair = [](const Rational& q) { return nlohmann::json{{"exact", to_string(q)}, {"value", to_double(q)}}; };
  return {{"gamma", r.gamma},
          {"dim", r.dim},
          {"support_size", r.n},
          {"queries", r.K},
          {"expected_excess", pair(r.expected_excess)},
          {"wrong_classifier_excess", pair(r.wrong_excess)},
          {"claimed_wrong_classifier_excess", pair(r.claimed_wrong_excess)},
          {"bound", pair(r.bound)},
          {"bound_holds", r.bound_holds},
          {"wrong_excess_matches_claim", r.matches_claim}};
}

// Exact excess of thresholding f_w at 1/2 when w* is the truth, using the
// value pattern of the construction (checked numerically to 1e-12): f_w is
// 1/2 + 2 gamma at w and 1/2 - 2 gamma elsewhere on the packing.
inline Rational hard_instance_excess(const HardInstance& h, std::size_t w, std::size_t truth) {
  const Rational g = to_rational(h.gamma);
  const Rational half(1, 2);
  const Rational mass(1, static_cast<long long>(h.packing.size()));
  Rational total = 0;
  for (std::size_t i = 0; i < h.packing.size(); ++i) {
    const auto& x = h.packing[i];
    const RealFn fw = hard_instance_member(h, w);
    const RealFn fs = hard_instance_member(h, truth);
    const Rational vw = (i == w) ? half + 2 * g : half - 2 * g;
    const Rational vs = (i == truth) ? half + 2 * g : half - 2 * g;
    if (std::abs(fw(x) - to_double(vw)) > 1e-12 || std::abs(fs(x) - to_double(vs)) > 1e-12)
      throw std::logic_error("hard_instance_excess: packing does not match the construction");
    const int hw = vw >= half ? 1 : -1;
    const int hs = vs >= half ? 1 : -1;
    if (hw != hs) total += mass * abs(2 * vs - 1);
  }
  return total;
}

// Minimum expected excess over deterministic strategies making at most K
// queries at support points, each answered with eta(x) (which reveals whether
// x = w*), ending in the output of one pool member. Memoized over the
// (candidate set, budget) state; the prior is uniform on the candidates.
inline Rational best_strategy_excess(const HardInstance& h, std::size_t K, std::size_t max_support = 20) {
  const std::size_t n = h.packing.size();
  if (n == 0) throw std::invalid_argument("best_strategy_excess: empty packing");
  if (n > max_support || n > 30) throw std::runtime_error("best_strategy_excess: enumeration budget exceeded");
  // cost[w][truth]
  std::vector<std::vector<Rational>> cost(n, std::vector<Rational>(n));
  for (std::size_t w = 0; w < n; ++w)
    for (std::size_t s = 0; s < n; ++s) cost[w][s] = hard_instance_excess(h, w, s);

  std::unordered_map<std::uint64_t, Rational> memo;
  std::function<Rational(std::uint32_t, std::size_t)> value = [&](std::uint32_t cand, std::size_t k) -> Rational {
    const std::uint64_t key = (static_cast<std::uint64_t>(cand) << 6) | k;
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const long long c = std::popcount(cand);
    Rational best;
    bool first = true;
    // stop and output member w
    for (std::size_t w = 0; w < n; ++w) {
      Rational e = 0;
      for (std::size_t s = 0; s < n; ++s)
        if (cand >> s & 1U) e += cost[w][s];
      e /= c;
      if (first || e < best) {
        best = e;
        first = false;
      }
    }
    // query a support point; only candidates carry information
    if (k > 0 && c > 1)
      for (std::size_t x = 0; x < n; ++x) {
        if (!(cand >> x & 1U)) continue;
        const std::uint32_t hit = 1U << x, miss = cand & ~hit;
        const Rational e = (Rational(1) * value(hit, k - 1) + Rational(c - 1) * value(miss, k - 1)) / c;
        if (e < best) best = e;
      }
    memo.emplace(key, best);
    return best;
  };
  const std::uint32_t all = n == 32 ? ~0U : ((1U << n) - 1U);
  return value(all, K);
}

inline LowerBoundReport verify_lower_bound_instance(double gamma, std::size_t d, std::size_t K,
                                                    const LowerBoundOptions& opt = {}) {
  Stream rng = Stream::derive(opt.seed, 0, Purpose::instance);
  const HardInstance h = make_single_relu_hard_instance(gamma, d, rng, opt.packing);
  LowerBoundReport r;
  r.gamma = gamma;
  r.dim = d;
  r.n = h.packing.size();
  r.K = K;
  const Rational g = to_rational(gamma);
  const Rational n(static_cast<long long>(r.n));
  r.expected_excess = best_strategy_excess(h, K, opt.max_support);
  r.wrong_excess = hard_instance_excess(h, (h.truth + 1) % r.n, h.truth);
  r.claimed_wrong_excess = g / (2 * n);
  r.bound = r.claimed_wrong_excess / 4;
  r.bound_holds = r.expected_excess >= r.bound;
  r.matches_claim = r.wrong_excess == r.claimed_wrong_excess;
  double max_inner = -1.0;
  for (std::size_t i = 0; i < r.n; ++i)
    for (std::size_t j = i + 1; j < r.n; ++j) max_inner = std::max(max_inner, dot(h.packing[i], h.packing[j]));
  r.min_pairwise_gap = 1.0 - 4.0 * gamma - max_inner;
  return r;
}

}  // namespace ncal
