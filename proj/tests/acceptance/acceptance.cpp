// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ncal/ncal.hpp"

using namespace ncal;
namespace fs = std::filesystem;

namespace {

// ----- pinned tolerances and budgets ------------------------------------------

constexpr double kRuntimeClip = 5.0;          // s
constexpr double kRuntimeCi = 120.0;          // s
constexpr double kRuntimeRetention = 300.0;   // s
constexpr double kRuntimeSaving = 600.0;      // s
constexpr double kRuntimeLowerBound = 60.0;   // s
constexpr double kRuntimeDisCoeff = 180.0;    // s
constexpr double kRegretTol = 1e-12;
constexpr double kIdentityTol = 1e-12;
constexpr double kSeMultiplier = 3.0;
constexpr std::size_t kEtaLiveMin = 18;       // of 20
constexpr std::size_t kRetentionMin = 95;     // of 100
constexpr double kQueryGrowthMax = 4.0;
constexpr double kPassiveGrowthMin = 8.0;

constexpr double kGamma = 0.2;
constexpr double kTau0 = 0.2;
constexpr double kC0 = 0.1;
constexpr double kThetaStep = 2.0;
constexpr std::size_t kStepPool = 40;
constexpr std::size_t kSeeds = 20;
constexpr std::size_t kProbe = 10'000;
constexpr std::size_t kEvalAtoms = 10'000;

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("criterion %2d %-34s %s  %s\n", id, name.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

HypothesisPool massart_step_pool(const ProblemInstance& inst) {
  return build_pool({{"kind", "step"}, {"size", kStepPool}, {"lo", 0.5 - kTau0}, {"hi", 0.5 + kTau0}}, inst, kProbe);
}

NeuralCalPpResult run_pp(const ProblemInstance& inst, const HypothesisPool& pool, double eps, std::uint64_t seed,
                         std::size_t eps_index) {
  const auto s = neuralcalpp_schedule(eps, kGamma, 0.1, pool.capacity_pdim, kThetaStep, kC0);
  NeuralCalPpOptions opt;
  opt.n_probe = kProbe;
  return run_neuralcalpp(inst, &pool, s, opt, Stream::derive(seed, eps_index, Purpose::draws),
                         Stream::derive(seed, eps_index, Purpose::labels));
}

// Shared by criteria 3, 4, 5, 10 and 7.
struct PpCounters {
  std::size_t width = 0, regret = 0, monotone = 0, nesting = 0, runs = 0;
};
PpCounters pp_counters;

void tally(const NeuralCalPpResult& r) {
  ++pp_counters.runs;
  for (const auto& e : r.trace) {
    pp_counters.width += e.width_violations;
    pp_counters.regret += e.regret_violations;
    pp_counters.monotone += e.monotone_violations;
    pp_counters.nesting += e.nesting_violations;
  }
}

// ----- 1 ------------------------------------------------------------------------

void clipping_identity() {
  Timer tm;
  Stream rng(0xC11);
  std::size_t mismatches = 0;
  for (int i = 0; i < 10'000; ++i) {
    const std::size_t d = 1 + rng.index(4);
    MlpArchitecture a{{d}, false};
    for (std::size_t l = 0, L = 1 + rng.index(3); l < L; ++l) a.layer_widths.push_back(1 + rng.index(8));
    a.layer_widths.push_back(1);
    const Mlp base = random_mlp(a, 0.5 + 2.0 * rng.uniform(), rng);
    const Mlp clipped = clip_network(base);
    Point x(d);
    for (auto& v : x) v = rng.uniform(-3, 3);
    if (clipped(x) != std::clamp(base.raw(x), 0.0, 1.0)) ++mismatches;
  }
  const double t = tm.seconds();
  report(1, "clipping identity", mismatches == 0 && t < kRuntimeClip,
         fmt("mismatches=%zu/10000 time=%.2fs", mismatches, t));
}

// ----- 2 ------------------------------------------------------------------------

void ci_oracle_equivalence() {
  Timer tm;
  Stream rng(0xC12);
  HypothesisPool pool;
  const MlpArchitecture a{{2, 4, 1}, true};
  for (int i = 0; i < 20; ++i) pool.members.push_back(as_function(random_mlp(a, 1.5, rng)));
  OracleBoundOptions opt;
  opt.refine = true;
  std::size_t violations = 0, probes = 0;
  double worst = 0.0;
  for (double iota : {0.05, 0.01}) {
    for (int k = 0; k < 1000; ++k) {
      QueryLog log;
      log.mark_epoch(0);
      const std::size_t n = rng.index(31);
      for (std::size_t t = 1; t <= n; ++t) log.append_queried(t, {rng.uniform(), rng.uniform()}, rng.bernoulli(0.5), 1);
      const double beta = std::pow(10.0, rng.uniform(-3, 1));
      const Point x{rng.uniform(), rng.uniform()};
      const auto F = active_set_regressors(pool, log, n, beta);
      const auto ci = pool_bounds(pool, F, x);
      const auto data = log.examples(n);
      const auto oracle = pool_oracle(pool);
      const double lo = oracle_bound(BoundDirection::lower, x, data, beta, iota, oracle, opt).value;
      const double hi = oracle_bound(BoundDirection::upper, x, data, beta, iota, oracle, opt).value;
      const double err = std::max(std::abs(lo - ci.lcb), std::abs(hi - ci.ucb));
      worst = std::max(worst, err);
      if (err > iota) ++violations;
      ++probes;
    }
  }
  const double t = tm.seconds();
  report(2, "CI oracle equivalence", violations == 0 && t < kRuntimeCi,
         fmt("violations=%zu/%zu max_gap=%.3g time=%.1fs", violations, probes, worst, t));
}

// ----- 3, 4, 5 ------------------------------------------------------------------

void abstention_runs() {
  const auto inst = make_massart_instance(kTau0, 1);
  const auto eval = discretize(inst, kEvalAtoms);
  const auto pool = massart_step_pool(inst);
  const auto probes = cube_probe_grid(1, kProbe);
  std::size_t width = 0, regret_live = 0, eta_live_runs = 0, abstain_probes = 0;
  double worst_identity = 0.0, worst_literal = 0.0;
  Stream erng(0);
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto r = run_pp(inst, pool, 0.05, seed, 0);
    tally(r);
    for (const auto& e : r.trace) {
      width += e.width_violations;
      if (r.eta_live_throughout) regret_live += e.regret_violations;
    }
    eta_live_runs += r.eta_live_throughout;
    for (const auto& x : probes) abstain_probes += r.classifier(x) == Decision::abstain;
    // stated form: err(randomized) - err(h*) = err_gamma(h) - err(h*) + gamma P(X_gamma)
    const double bayes = bayes_error(eval, 0, erng);
    const double lhs = randomized_error(eval, r.classifier, 0, erng) - bayes;
    const double chow = chow_error(eval, r.classifier, kGamma, 0, erng) - bayes;
    worst_literal = std::max(worst_literal, std::abs(lhs - (chow + kGamma * band_mass(eval, kGamma, 0, erng))));
    // with P(h = abstain) in place of P(X_gamma) the identity is exact; reported only
    worst_identity = std::max(worst_identity, std::abs(lhs - (chow + kGamma * abstention_mass(eval, r.classifier, 0, erng))));
  }
  report(3, "query implies width", width == 0, fmt("violations=%zu over %zu runs", width, kSeeds));
  report(4, "no-query regret", regret_live == 0 && eta_live_runs >= kEtaLiveMin,
         fmt("violations(eta live)=%zu eta_live_runs=%zu/%zu", regret_live, eta_live_runs, kSeeds));
  report(5, "proper abstention", abstain_probes == 0 && worst_literal <= kIdentityTol,
         fmt("abstentions=%zu/%zu stated_identity_err=%.3g P(X_gamma)=%.3g abstention_mass_identity_err=%.2g",
             abstain_probes, kSeeds * kProbe, worst_literal, band_mass(eval, kGamma, 0, erng), worst_identity));
}

// ----- 6 ------------------------------------------------------------------------

void neuralcal_retention() {
  Timer tm;
  const auto inst = make_tsybakov_instance(1.0, 1);
  const auto hpool = build_pool({{"kind", "threshold"}, {"size", 50}}, inst, 1000);
  const auto pool = as_classifiers(hpool);
  // best in class by exact excess on a fine discretization (independent of the runs)
  const auto eval = discretize(inst, kEvalAtoms);
  Stream unused(0);
  std::size_t best = 0;
  double best_ex = INFINITY;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double e = bayes_excess_error(eval, pool.members[i], 0, unused);
    if (e < best_ex) {
      best_ex = e;
      best = i;
    }
  }
  const auto s = neuralcal_schedule(0.1, 1.0, 0.1, 1);
  std::size_t live = 0, nest = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = run_neuralcal(inst, pool, s, Stream::derive(seed, 0, Purpose::draws),
                                 Stream::derive(seed, 0, Purpose::labels));
    live += r.active_sets.back().contains(best);
    nest += r.audit_violations;
  }
  pp_counters.nesting += nest;
  const double t = tm.seconds();
  report(6, "neuralcal retention", live >= kRetentionMin && t < kRuntimeRetention,
         fmt("best_index=%zu live_at_M=%zu/100 M=%llu time=%.1fs", best, live, static_cast<unsigned long long>(s.M), t));
}

// ----- 7 ------------------------------------------------------------------------

void exponential_saving() {
  Timer tm;
  const auto inst = make_massart_instance(kTau0, 1);
  const auto eval = discretize(inst, kEvalAtoms);
  const auto pool = massart_step_pool(inst);
  const auto cls = as_classifiers(pool);
  Stream erng(0);
  const double bayes = bayes_error(eval, 0, erng);

  const std::vector<double> eps{0.05, 0.0125};
  std::vector<double> mean_q, mean_ex;
  for (std::size_t e = 0; e < eps.size(); ++e) {
    std::vector<double> q, ex;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
      const auto r = run_pp(inst, pool, eps[e], seed, e + 1);
      tally(r);
      q.push_back(static_cast<double>(r.queries));
      ex.push_back(randomized_error(eval, r.classifier, 0, erng) - bayes);
    }
    mean_q.push_back(mean_stderr(q).mean);
    mean_ex.push_back(mean_stderr(ex).mean);
  }
  const double q_ratio = mean_q[1] / mean_q[0];

  // passive labels needed to match each active mean excess: smallest n = 2^k
  // whose mean excess over the same number of seeds is no larger
  std::vector<double> passive_mean;
  std::vector<std::size_t> grid;
  for (std::size_t k = 0; k <= 16; ++k) {
    const std::size_t n = std::size_t{1} << k;
    std::vector<double> ex;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
      const auto r = run_passive_erm(inst, cls, n, Stream::derive(seed, 100 + k, Purpose::draws),
                                     Stream::derive(seed, 100 + k, Purpose::labels));
      ex.push_back(bayes_excess_error(eval, r.classifier, 0, erng));
    }
    grid.push_back(n);
    passive_mean.push_back(mean_stderr(ex).mean);
  }
  auto matched = [&](double target) -> double {
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (passive_mean[i] <= target) return static_cast<double>(grid[i]);
    return INFINITY;
  };
  const double n0 = matched(mean_ex[0]), n1 = matched(mean_ex[1]);
  const double p_ratio = n1 / n0;
  const double t = tm.seconds();
  report(7, "exponential-saving signature",
         q_ratio <= kQueryGrowthMax && p_ratio >= kPassiveGrowthMin && t < kRuntimeSaving,
         fmt("queries %.1f -> %.1f (x%.2f); excess %.4g -> %.4g; passive n %.0f -> %.0f (x%.2f) time=%.0fs", mean_q[0],
             mean_q[1], q_ratio, mean_ex[0], mean_ex[1], n0, n1, p_ratio, t));
}

// ----- 8 ------------------------------------------------------------------------

void lower_bound() {
  Timer tm;
  const double gamma = 1.0 / 16.0;
  LowerBoundOptions opt;
  const auto probe = verify_lower_bound_instance(gamma, 2, 0, opt);
  const auto r = verify_lower_bound_instance(gamma, 2, probe.n / 2, opt);
  const double t = tm.seconds();
  report(8, "lower-bound verifier", r.bound_holds && r.matches_claim && t < kRuntimeLowerBound,
         fmt("|X|=%zu K=%zu expected=%s >= bound=%s: %s; wrong-member excess=%s vs claimed %s: %s; time=%.2fs", r.n, r.K,
             to_string(r.expected_excess).c_str(), to_string(r.bound).c_str(), r.bound_holds ? "yes" : "no",
             to_string(r.wrong_excess).c_str(), to_string(r.claimed_wrong_excess).c_str(),
             r.matches_claim ? "equal" : "differ", t));
}

// ----- 9 ------------------------------------------------------------------------

void dis_coefficients() {
  Timer tm;
  bool ok = true;
  std::ostringstream detail;
  const auto uni = make_tsybakov_instance(1.0, 1);
  const double eps0 = 0.01;
  const auto grid = log_grid(eps0 * 1.01, 0.25, 32);

  // thresholds j/2000, center 1/2
  ClassifierPool thr;
  for (int j = 0; j <= 2000; ++j) {
    const double s = j / 2000.0;
    thr.members.push_back([s](const Point& x) { return x[0] >= s ? 1 : -1; });
  }
  Stream rng = Stream::derive(0, 0, Purpose::estimate);
  const auto e = estimate_classifier_dis_coeff(thr, 1000, eps0, grid, 200'000, uni, rng);
  const bool near2 = std::abs(e.value - 2.0) <= kSeMultiplier * e.stderr_;
  ok = ok && near2;
  detail << fmt("threshold=%.4f+-%.4f", e.value, e.stderr_);

  // range checks on other classifier pools
  std::vector<DisCoeffEstimate> all{e};
  ClassifierPool single{{[](const Point&) { return 1; }}};
  all.push_back(estimate_classifier_dis_coeff(single, 0, eps0, grid, 20'000, uni, rng));
  const auto massart = make_massart_instance(kTau0, 1);
  const auto step_cls = as_classifiers(massart_step_pool(massart));
  all.push_back(estimate_classifier_dis_coeff(step_cls, kStepPool / 2, eps0, grid, 20'000, massart, rng));
  ClassifierPool intervals;
  for (int a = 0; a < 10; ++a)
    for (int b = a + 1; b <= 10; ++b)
      intervals.members.push_back([a, b](const Point& x) { return x[0] >= a / 10.0 && x[0] < b / 10.0 ? 1 : -1; });
  all.push_back(estimate_classifier_dis_coeff(intervals, 5, eps0, grid, 20'000, uni, rng));
  std::size_t range_fail = 0;
  for (const auto& d : all)
    if (!(d.value >= 1.0 && d.value <= 1.0 / eps0 + kSeMultiplier * d.stderr_)) ++range_fail;
  ok = ok && range_fail == 0;
  detail << fmt(" range_failures=%zu/%zu", range_fail, all.size());

  // value coefficient vs covering bound on Lipschitz-filtered pools
  const double gamma = kGamma, gamma0 = gamma / 4.0;
  const double L = 1.0;
  const auto pairs = probe_pairs_from(cube_probe_grid(1, 1000));
  const auto gg = log_grid(gamma0 * 1.01, 0.5, 16), eg = log_grid(1e-3, 1.0, 16);
  std::size_t order_fail = 0, pools_tested = 0;
  Stream prng(0xD15);
  for (int trial = 0; trial < 6; ++trial) {
    HypothesisPool p;
    for (int i = 0; i < 12; ++i) {
      const double c = prng.uniform(0.2, 0.8), slope = prng.uniform(-1.5, 1.5), kink = prng.uniform();
      p.members.push_back([c, slope, kink](const Point& x) { return std::clamp(c + slope * std::abs(x[0] - kink), 0.0, 1.0); });
    }
    HypothesisPool kept;
    for (const auto& f : p.members)
      if (approx_lipschitz_ok(f, L, gamma0 / 4.0, pairs)) kept.members.push_back(f);
    if (kept.members.size() < 2) continue;
    ++pools_tested;
    const auto v = estimate_value_dis_coeff(kept, 0, gamma0, gg, eg, 20'000, uni, rng);
    const double bound = covering_theta_bound(L, uni.domain_radius, gamma0, uni.dim);
    if (!(v.value >= 1.0 && v.value <= bound + kSeMultiplier * v.stderr_)) ++order_fail;
  }
  ok = ok && order_fail == 0 && pools_tested > 0;
  const double t = tm.seconds();
  ok = ok && t < kRuntimeDisCoeff;
  detail << fmt(" value_vs_covering_failures=%zu/%zu time=%.1fs", order_fail, pools_tested, t);
  report(9, "disagreement-coefficient sanity", ok, detail.str());
}

// ----- 10 -----------------------------------------------------------------------

void nesting_monotone() {
  report(10, "nesting and monotone querying", pp_counters.nesting == 0 && pp_counters.monotone == 0 && pp_counters.runs > 0,
         fmt("nesting=%zu monotone=%zu over %zu neuralcal++ runs (+100 neuralcal runs)", pp_counters.nesting,
             pp_counters.monotone, pp_counters.runs));
}

// ----- 11 -----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void determinism() {
  ExperimentConfig a;
  a.instance = {"massart", {{"tau0", kTau0}, {"dim", 1}}, 0};
  a.pool = {{"kind", "step"}, {"size", kStepPool}, {"lo", 0.3}, {"hi", 0.7}};
  a.algorithms = {Algorithm::neuralcalpp, Algorithm::passive_erm};
  a.epsilons = {0.1, 0.05};
  a.c0 = kC0;
  a.theta_val = kThetaStep;
  a.n_runs = 3;
  a.master_seed = 17;
  a.write_logs = true;

  ExperimentConfig b;
  b.instance = {"tsybakov", {{"beta", 1.0}, {"dim", 1}}, 0};
  b.pool = {{"kind", "threshold"}, {"size", 50}};
  b.algorithms = {Algorithm::neuralcal};
  b.noise_beta = 1.0;
  b.epsilons = {0.1};
  b.n_runs = 3;

  std::size_t files = 0, diffs = 0;
  const auto root = fs::temp_directory_path() / "ncal_acceptance_determinism";
  int k = 0;
  for (auto cfg : {a, b}) {
    const auto d1 = root / fmt("c%d_first", k), d2 = root / fmt("c%d_second", k);
    ++k;
    fs::remove_all(d1);
    fs::remove_all(d2);
    cfg.out_dir = d1.string();
    cfg.workers = 1;
    run_experiment(cfg);
    cfg.out_dir = d2.string();
    cfg.workers = 4;
    run_experiment(cfg);
    for (const auto& e : fs::directory_iterator(d1)) {
      const auto name = e.path().filename().string();
      if (name == "timing.csv" || name == "run_meta.json") continue;
      ++files;
      if (!fs::exists(d2 / name) || slurp(e.path()) != slurp(d2 / name)) ++diffs;
    }
  }
  fs::remove_all(root);
  report(11, "determinism", diffs == 0 && files > 0, fmt("files_compared=%zu differing=%zu", files, diffs));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> steps{clipping_identity, ci_oracle_equivalence, abstention_runs,
                                                 neuralcal_retention, exponential_saving,   lower_bound,
                                                 dis_coefficients,    nesting_monotone,     determinism};
  for (const auto& s : steps) {
    try {
      s();
    } catch (const std::exception& e) {
      std::printf("criterion error: %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%d criterion line(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
