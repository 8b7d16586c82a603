#pragma once
// Disagreement-based active learning with empirical 0-1 risk elimination.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ncal/core.hpp"
#include "ncal/problem.hpp"
#include "ncal/rng.hpp"
#include "ncal/version_space.hpp"

namespace ncal {

struct NeuralCalSchedule {
  double epsilon = 0.1;
  double beta = 0.0;
  double delta = 0.1;
  std::uint64_t vcdim = 1;
  double c_rho = 1.0;
  std::uint64_t T = 0;
  std::uint64_t M = 0;
  std::vector<std::uint64_t> tau;  // tau[0..M]
  std::vector<double> rho;         // rho[1..M]; rho[0] unused
};

inline NeuralCalSchedule neuralcal_schedule(double epsilon, double beta, double delta, std::uint64_t vcdim,
                                            double c_rho = 1.0) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("neuralcal_schedule: epsilon must be in (0, 1)");
  if (!(beta >= 0.0)) throw std::invalid_argument("neuralcal_schedule: beta must be >= 0");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("neuralcal_schedule: delta must be in (0, 1)");
  if (vcdim < 1) throw std::invalid_argument("neuralcal_schedule: vcdim must be >= 1");
  if (!(c_rho >= 0.0)) throw std::invalid_argument("neuralcal_schedule: c_rho must be >= 0");
  NeuralCalSchedule s;
  s.epsilon = epsilon;
  s.beta = beta;
  s.delta = delta;
  s.vcdim = vcdim;
  s.c_rho = c_rho;
  s.T = ceil_tol(std::pow(epsilon, -(2.0 + beta) / (1.0 + beta)) * static_cast<double>(vcdim));
  s.M = std::max<std::uint64_t>(1, ceil_tol(std::log2(static_cast<double>(s.T))));
  s.tau.push_back(0);
  for (std::uint64_t m = 1; m <= s.M; ++m) s.tau.push_back(std::uint64_t{1} << m);
  const double expo = (1.0 + beta) / (2.0 + beta);
  s.rho.assign(s.M + 1, 0.0);
  s.rho[1] = 1.0;
  const double log_md = log2_floor2(static_cast<double>(s.M) / delta);
  for (std::uint64_t m = 2; m <= s.M; ++m) {
    const double tp = static_cast<double>(s.tau[m - 1]);
    s.rho[m] = c_rho * std::pow(static_cast<double>(vcdim) * log2_floor2(tp) * log_md / tp, expo);
  }
  return s;
}

struct NeuralCalEpoch {
  std::uint64_t epoch = 0;
  std::uint64_t tau = 0;
  double rho = 0.0;
  std::size_t live_size = 0;
  std::size_t queries = 0;
  std::size_t cumulative_queries = 0;
  std::size_t audit_violations = 0;
};

struct NeuralCalResult {
  std::size_t returned_index = 0;
  Classifier classifier;
  QueryLog log;
  std::vector<NeuralCalEpoch> trace;
  std::vector<ActiveSet> active_sets;  // H_1..H_M
  std::uint64_t unlabeled = 0;
  std::size_t queries = 0;
  std::size_t audit_violations = 0;
};

// One run. `draws` supplies x_t, `labels` the label noise, so the two streams
// never interfere.
inline NeuralCalResult run_neuralcal(const ProblemInstance& instance, const ClassifierPool& pool,
                                     const NeuralCalSchedule& s, Stream draws, Stream labels) {
  if (pool.members.empty()) throw std::invalid_argument("run_neuralcal: empty pool");
  NeuralCalResult r;
  ActiveSet H = full_active_set(pool.size());
  std::uint64_t t = 0;
  for (std::uint64_t m = 1; m <= s.M; ++m) {
    // the slack tau_{m-1} rho_m is zero for m = 1, so H_1 keeps exactly the
    // empirical minimizers of the empty log: everyone
    const double slack = static_cast<double>(s.tau[m - 1]) * s.rho[m];
    H = active_set_classifiers(pool, r.log, s.tau[m - 1], slack, &H);
    r.active_sets.push_back(H);
    r.log.mark_epoch(s.tau[m - 1]);
    NeuralCalEpoch ep{m, s.tau[m], s.rho[m], H.size(), 0, r.queries, 0};
    if (m == s.M) {
      r.trace.push_back(ep);
      break;
    }
    for (; t < s.tau[m];) {
      ++t;
      Point x = sample_point(instance, draws);
      if (in_disagreement(pool, H, x)) {
        const double y = sample_label(instance, x, labels);
        r.log.append_queried(t, std::move(x), y, m);
        ++ep.queries;
      } else {
        r.log.append_unqueried(t, std::move(x), m);
      }
    }
    r.queries += ep.queries;
    ep.cumulative_queries = r.queries;
    r.trace.push_back(ep);
  }
  r.unlabeled = t;
  r.returned_index = H.live.front();
  r.classifier = pool.members[r.returned_index];
  for (std::size_t i = 1; i < r.active_sets.size(); ++i)
    for (auto j : r.active_sets[i].live)
      if (!r.active_sets[i - 1].contains(j)) ++r.audit_violations;
  return r;
}

}  // namespace ncal
