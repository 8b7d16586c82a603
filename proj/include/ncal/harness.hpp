#pragma once
// Experiment configuration, pool builders, the passive ERM baseline, and the
// seeded multi-run executor with CSV/JSON outputs.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncal/core.hpp"
#include "ncal/metrics.hpp"
#include "ncal/nets.hpp"
#include "ncal/neuralcal.hpp"
#include "ncal/neuralcalpp.hpp"
#include "ncal/problem.hpp"
#include "ncal/rng.hpp"
#include "ncal/version_space.hpp"

namespace ncal {

// ----- passive baseline ------------------------------------------------------

struct PassiveResult {
  std::size_t index = 0;
  Classifier classifier;
  std::size_t queries = 0;
  QueryLog log;
};

// Labels n i.i.d. draws and returns the lowest-index empirical 0-1 risk minimizer.
inline PassiveResult run_passive_erm(const ProblemInstance& instance, const ClassifierPool& pool, std::size_t n,
                                     Stream draws, Stream labels) {
  if (pool.members.empty()) throw std::invalid_argument("run_passive_erm: empty pool");
  PassiveResult r;
  r.log.mark_epoch(0);
  for (std::size_t t = 1; t <= n; ++t) {
    Point x = sample_point(instance, draws);
    const double y = sample_label(instance, x, labels);
    r.log.append_queried(t, std::move(x), y, 1);
  }
  r.queries = n;
  const auto risks = risks_01(pool, r.log, n);
  r.index = active_set_from_risks(risks, 0.0, full_active_set(pool.size()).live).erm;
  r.classifier = pool.members[r.index];
  return r;
}

// ----- pools -----------------------------------------------------------------

// Builds a finite pool from JSON:
//   {"kind": "step", "size": K, "lo": a, "hi": b}   f_j(x) = x_1 >= j/K ? b : a
//   {"kind": "threshold", "size": K}                 f_j(x) = 1(x_1 >= j/K)
// eta_index and approx_kappa are detected on the instance probe grid.
inline HypothesisPool build_pool(const nlohmann::json& spec, const ProblemInstance& instance,
                                 std::size_t n_probe = 10'000) {
  const std::string kind = spec.at("kind").get<std::string>();
  HypothesisPool pool;
  if (kind == "step" || kind == "threshold") {
    const auto K = spec.at("size").get<std::size_t>();
    if (K == 0) throw std::invalid_argument("build_pool: size must be positive");
    const double lo = kind == "step" ? spec.value("lo", 0.3) : 0.0;
    const double hi = kind == "step" ? spec.value("hi", 0.7) : 1.0;
    for (std::size_t j = 0; j < K; ++j) {
      const double s = static_cast<double>(j) / static_cast<double>(K);
      pool.members.push_back([s, lo, hi](const Point& x) { return x[0] >= s ? hi : lo; });
    }
    // a class of 1-d thresholds shatters one point
    pool.capacity_pdim = spec.value("pdim", std::uint64_t{1});
    pool.capacity_vcdim = spec.value("vcdim", std::uint64_t{1});
  } else {
    throw std::invalid_argument("build_pool: unknown pool kind '" + kind + "'");
  }
  if (spec.contains("lipschitz_L")) pool.lipschitz_L = spec.at("lipschitz_L").get<double>();
  const auto probes = probe_points(instance, n_probe);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    double sup = 0.0;
    for (const auto& x : probes) sup = std::max(sup, std::abs(pool.members[i](x) - instance.eta(x)));
    if (sup < best) {
      best = sup;
      best_i = i;
    }
  }
  pool.approx_kappa = best;
  if (best <= 1e-12) pool.eta_index = best_i;
  return pool;
}

// ----- configuration ----------------------------------------------------------

enum class Algorithm { neuralcal, neuralcalpp, passive_erm };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::neuralcal: return "neuralcal";
    case Algorithm::neuralcalpp: return "neuralcalpp";
    case Algorithm::passive_erm: return "passive-erm";
  }
  return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "neuralcal") return Algorithm::neuralcal;
  if (s == "neuralcalpp") return Algorithm::neuralcalpp;
  if (s == "passive-erm" || s == "passive_erm") return Algorithm::passive_erm;
  throw std::invalid_argument("unknown algorithm '" + s + "'");
}

struct ExperimentConfig {
  InstanceSpec instance;
  nlohmann::json pool = {{"kind", "step"}, {"size", 40}, {"lo", 0.3}, {"hi", 0.7}};
  std::vector<Algorithm> algorithms{Algorithm::neuralcalpp};
  std::string mode = "exact-pool";  // or "oracle"
  std::vector<double> epsilons{0.05};
  std::size_t n_runs = 1;
  std::uint64_t master_seed = 0;
  std::string out_dir = "out";
  std::size_t workers = 1;

  // schedule constants
  double delta = 0.1;
  double gamma = 0.2;
  double c0 = 1.0;
  std::optional<double> theta_val;  // declared; otherwise covering bound
  std::optional<std::uint64_t> pdim, vcdim;
  double noise_beta = 0.0;  // exponent used by the neuralcal schedule
  double c_rho = 1.0;
  double c_capacity = 1.0;
  double c_covering = 1.0;

  std::optional<std::size_t> passive_n;  // default: tau_{M-1} of the matched active schedule
  std::size_t n_probe = 2000;
  std::size_t eval_atoms = 10'000;  // finite-support variant for exact excess
  std::size_t n_mc = 100'000;       // used only when the instance cannot be discretized

  // oracle mode
  std::vector<std::size_t> hidden{8};
  OracleConfig oracle;
  std::optional<double> filter_L;
  double filter_kappa = 0.05;
  bool write_logs = false;
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json algs = nlohmann::json::array();
  for (auto a : c.algorithms) algs.push_back(to_string(a));
  nlohmann::json j{{"instance", c.instance},  {"pool", c.pool},          {"algorithms", algs},
                   {"mode", c.mode},          {"epsilons", c.epsilons},  {"n_runs", c.n_runs},
                   {"master_seed", c.master_seed}, {"out_dir", c.out_dir}, {"workers", c.workers},
                   {"delta", c.delta},        {"gamma", c.gamma},        {"c0", c.c0},
                   {"noise_beta", c.noise_beta}, {"c_rho", c.c_rho},     {"c_capacity", c.c_capacity},
                   {"c_covering", c.c_covering}, {"n_probe", c.n_probe}, {"eval_atoms", c.eval_atoms},
                   {"n_mc", c.n_mc},          {"hidden", c.hidden},      {"oracle", c.oracle},
                   {"filter_kappa", c.filter_kappa}, {"write_logs", c.write_logs}};
  if (c.theta_val) j["theta_val"] = *c.theta_val;
  if (c.pdim) j["pdim"] = *c.pdim;
  if (c.vcdim) j["vcdim"] = *c.vcdim;
  if (c.passive_n) j["passive_n"] = *c.passive_n;
  if (c.filter_L) j["filter_L"] = *c.filter_L;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.instance = j.at("instance").get<InstanceSpec>();
  if (j.contains("pool")) c.pool = j.at("pool");
  if (j.contains("algorithm") || j.contains("algorithms")) {
    const auto& a = j.contains("algorithms") ? j.at("algorithms") : j.at("algorithm");
    c.algorithms.clear();
    if (a.is_array())
      for (const auto& s : a) c.algorithms.push_back(algorithm_from_string(s.get<std::string>()));
    else
      c.algorithms.push_back(algorithm_from_string(a.get<std::string>()));
  }
  c.mode = j.value("mode", c.mode);
  if (c.mode != "exact-pool" && c.mode != "oracle") throw std::invalid_argument("config: mode must be exact-pool or oracle");
  if (j.contains("epsilons")) c.epsilons = j.at("epsilons").get<std::vector<double>>();
  if (j.contains("epsilon")) c.epsilons = {j.at("epsilon").get<double>()};
  c.n_runs = j.value("n_runs", c.n_runs);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.workers = j.value("workers", c.workers);
  c.delta = j.value("delta", c.delta);
  c.gamma = j.value("gamma", c.gamma);
  c.c0 = j.value("c0", c.c0);
  if (j.contains("theta_val")) c.theta_val = j.at("theta_val").get<double>();
  if (j.contains("pdim")) c.pdim = j.at("pdim").get<std::uint64_t>();
  if (j.contains("vcdim")) c.vcdim = j.at("vcdim").get<std::uint64_t>();
  c.noise_beta = j.value("noise_beta", c.noise_beta);
  c.c_rho = j.value("c_rho", c.c_rho);
  c.c_capacity = j.value("c_capacity", c.c_capacity);
  c.c_covering = j.value("c_covering", c.c_covering);
  if (j.contains("passive_n")) c.passive_n = j.at("passive_n").get<std::size_t>();
  c.n_probe = j.value("n_probe", c.n_probe);
  c.eval_atoms = j.value("eval_atoms", c.eval_atoms);
  c.n_mc = j.value("n_mc", c.n_mc);
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  if (j.contains("oracle")) c.oracle = j.at("oracle").get<OracleConfig>();
  if (j.contains("filter_L")) c.filter_L = j.at("filter_L").get<double>();
  c.filter_kappa = j.value("filter_kappa", c.filter_kappa);
  c.write_logs = j.value("write_logs", c.write_logs);
  if (c.epsilons.empty()) throw std::invalid_argument("config: empty epsilon list");
  if (c.n_runs == 0) throw std::invalid_argument("config: n_runs must be positive");
  return c;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Hash of everything that determines results (output location and worker count excluded).
inline std::string config_hash(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("out_dir");
  j.erase("workers");
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a64(j.dump());
  return os.str();
}

// ----- runs ------------------------------------------------------------------

struct RunRecord {
  std::string config_hash;
  Algorithm algorithm = Algorithm::neuralcalpp;
  double epsilon = 0.0;
  std::size_t eps_index = 0;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  double excess = 0.0;
  std::optional<double> chow_excess;
  std::size_t queries = 0;
  std::uint64_t unlabeled = 0;
  std::size_t audit_violations = 0;
  double wall_seconds = 0.0;
  std::string trace_file;
  std::string trace_csv;  // contents, written by the collector
  std::string log_csv;
};

struct PreparedExperiment {
  ProblemInstance instance;
  ProblemInstance eval;  // finite-support variant when available
  HypothesisPool pool;
  ClassifierPool classifiers;
  std::string theta_source;
  double theta_val = 1.0;
  std::uint64_t pdim = 1, vcdim = 1;
  MlpArchitecture arch;
};

inline PreparedExperiment prepare(const ExperimentConfig& c) {
  PreparedExperiment p;
  p.instance = instance_from_spec(c.instance);
  p.eval = (p.instance.finite_support() || p.instance.marginal.domain != MarginalDistribution::Domain::unit_cube)
               ? p.instance
               : discretize(p.instance, c.eval_atoms);
  p.pool = build_pool(c.pool, p.instance, c.n_probe);
  p.classifiers = as_classifiers(p.pool);
  p.arch.layer_widths.push_back(p.instance.dim);
  for (auto w : c.hidden) p.arch.layer_widths.push_back(w);
  p.arch.layer_widths.push_back(1);
  p.arch.clipped = true;
  if (c.mode == "oracle") {
    const auto W = std::max<std::size_t>(2, p.arch.total_params());
    p.pdim = c.pdim.value_or(capacity_bound(W, p.arch.depth(), c.c_capacity));
    p.vcdim = c.vcdim.value_or(p.pdim);
  } else {
    p.pdim = c.pdim.value_or(p.pool.capacity_pdim);
    p.vcdim = c.vcdim.value_or(p.pool.capacity_vcdim);
  }
  if (c.theta_val) {
    p.theta_val = *c.theta_val;
    p.theta_source = "declared";
  } else {
    const double L = c.filter_L.value_or(p.pool.lipschitz_L.value_or(1.0));
    p.theta_val = std::max(1.0, covering_theta_bound(L, p.instance.domain_radius, c.gamma / 4.0, p.instance.dim, c.c_covering));
    p.theta_source = "covering_bound";
  }
  return p;
}

namespace detail {

inline std::string neuralcal_trace_csv(const NeuralCalResult& r) {
  std::ostringstream os;
  os << "epoch,tau,rho,live_size,queries_this_epoch,cumulative_queries\n";
  for (const auto& e : r.trace)
    os << e.epoch << ',' << e.tau << ',' << fmt17(e.rho) << ',' << e.live_size << ',' << e.queries << ','
       << e.cumulative_queries << '\n';
  return os.str();
}

inline std::string neuralcalpp_trace_csv(const NeuralCalPpResult& r, const std::string& theta_source) {
  std::ostringstream os;
  os << "epoch,beta_m,queries,cumulative_queries,live_size,audit_violations,eta_live,width_violations,"
        "regret_violations,monotone_violations,nesting_violations,improper_abstentions,probe_abstentions,"
        "filter_failures,theta_source\n";
  for (const auto& e : r.trace)
    os << e.epoch << ',' << fmt17(e.beta_m) << ',' << e.queries << ',' << e.cumulative_queries << ',' << e.live_size
       << ',' << e.audit_violations << ',' << (e.eta_live ? 1 : 0) << ',' << e.width_violations << ','
       << e.regret_violations << ',' << e.monotone_violations << ',' << e.nesting_violations << ','
       << e.improper_abstentions << ',' << e.abstentions << ',' << e.filter_failures << ',' << theta_source << '\n';
  return os.str();
}

inline std::string passive_trace_csv(const PassiveResult& r) {
  std::ostringstream os;
  os << "n,queries,returned_index\n" << r.queries << ',' << r.queries << ',' << r.index << '\n';
  return os.str();
}

}  // namespace detail

inline std::size_t matched_passive_n(const ExperimentConfig& c, const PreparedExperiment& p, double eps) {
  if (c.passive_n) return *c.passive_n;
  const auto s = neuralcalpp_schedule(eps, c.gamma, c.delta, p.pdim, p.theta_val, c.c0);
  return static_cast<std::size_t>(s.tau[s.M - 1]);
}

inline RunRecord execute_run(const ExperimentConfig& c, const PreparedExperiment& p, Algorithm algo,
                             std::size_t eps_index, std::size_t run) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config_hash = config_hash(c);
  rec.algorithm = algo;
  rec.eps_index = eps_index;
  rec.epsilon = c.epsilons[eps_index];
  rec.run = run;
  rec.seed = c.master_seed + run;
  const Stream draws = Stream::derive(rec.seed, eps_index, Purpose::draws);
  const Stream labels = Stream::derive(rec.seed, eps_index, Purpose::labels);
  Stream eval_rng = Stream::derive(rec.seed, eps_index, Purpose::audit);
  std::ostringstream name;
  name << "trace_" << to_string(algo) << "-e" << eps_index << "-r" << run << ".csv";
  rec.trace_file = name.str();

  const std::size_t n_mc = p.eval.finite_support() ? 0 : c.n_mc;
  switch (algo) {
    case Algorithm::neuralcal: {
      const auto s = neuralcal_schedule(rec.epsilon, c.noise_beta, c.delta, p.vcdim, c.c_rho);
      const auto r = run_neuralcal(p.instance, p.classifiers, s, draws, labels);
      rec.excess = bayes_excess_error(p.eval, r.classifier, n_mc, eval_rng);
      rec.queries = r.queries;
      rec.unlabeled = r.unlabeled;
      rec.audit_violations = r.audit_violations;
      rec.trace_csv = detail::neuralcal_trace_csv(r);
      if (c.write_logs) rec.log_csv = r.log.to_csv();
      break;
    }
    case Algorithm::neuralcalpp: {
      const auto s = neuralcalpp_schedule(rec.epsilon, c.gamma, c.delta, p.pdim, p.theta_val, c.c0);
      NeuralCalPpOptions opt;
      opt.n_probe = c.n_probe;
      if (c.mode == "oracle") {
        opt.ci_mode = CiMode::oracle;
        opt.arch = p.arch;
        opt.oracle_cfg = c.oracle;
        opt.oracle_cfg.seed = Stream::derive(rec.seed, eps_index, Purpose::oracle)();
        opt.filter_L = c.filter_L;
        opt.filter_kappa = c.filter_kappa;
      }
      const auto r = run_neuralcalpp(p.instance, c.mode == "oracle" ? nullptr : &p.pool, s, opt, draws, labels);
      rec.excess = randomized_error(p.eval, r.classifier, n_mc, eval_rng) - bayes_error(p.eval, n_mc, eval_rng);
      rec.chow_excess = chow_excess(p.eval, r.classifier, c.gamma, n_mc, eval_rng);
      rec.queries = r.queries;
      rec.unlabeled = r.unlabeled;
      rec.audit_violations = r.audit_violations;
      rec.trace_csv = detail::neuralcalpp_trace_csv(r, p.theta_source);
      if (c.write_logs) rec.log_csv = r.log.to_csv();
      break;
    }
    case Algorithm::passive_erm: {
      const std::size_t n = matched_passive_n(c, p, rec.epsilon);
      const auto r = run_passive_erm(p.instance, p.classifiers, n, draws, labels);
      rec.excess = bayes_excess_error(p.eval, r.classifier, n_mc, eval_rng);
      rec.queries = r.queries;
      rec.unlabeled = n;
      rec.trace_csv = detail::passive_trace_csv(r);
      if (c.write_logs) rec.log_csv = r.log.to_csv();
      break;
    }
  }
  if (rec.queries > rec.unlabeled) throw std::logic_error("execute_run: more queries than unlabeled draws");
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

struct ExperimentSummary {
  std::vector<RunRecord> records;
  std::size_t audit_violations = 0;
};

inline std::string records_csv(const std::vector<RunRecord>& recs) {
  std::ostringstream os;
  os << "config_hash,algorithm,epsilon,run,seed,excess,chow_excess,queries,unlabeled,audit_violations,trace_file\n";
  for (const auto& r : recs)
    os << r.config_hash << ',' << to_string(r.algorithm) << ',' << fmt17(r.epsilon) << ',' << r.run << ',' << r.seed
       << ',' << fmt17(r.excess) << ',' << (r.chow_excess ? fmt17(*r.chow_excess) : std::string{}) << ','
       << r.queries << ',' << r.unlabeled << ',' << r.audit_violations << ',' << r.trace_file << '\n';
  return os.str();
}

inline std::string aggregate_csv(const ExperimentConfig& c, const std::vector<RunRecord>& recs) {
  std::ostringstream os;
  os << "algorithm,epsilon,n_runs,mean_excess,se_excess,mean_chow_excess,se_chow_excess,mean_queries,se_queries,"
        "mean_unlabeled\n";
  for (auto algo : c.algorithms)
    for (std::size_t e = 0; e < c.epsilons.size(); ++e) {
      std::vector<double> ex, ch, q, u;
      for (const auto& r : recs)
        if (r.algorithm == algo && r.eps_index == e) {
          ex.push_back(r.excess);
          if (r.chow_excess) ch.push_back(*r.chow_excess);
          q.push_back(static_cast<double>(r.queries));
          u.push_back(static_cast<double>(r.unlabeled));
        }
      const auto mex = mean_stderr(ex), mch = mean_stderr(ch), mq = mean_stderr(q), mu = mean_stderr(u);
      os << to_string(algo) << ',' << fmt17(c.epsilons[e]) << ',' << ex.size() << ',' << fmt17(mex.mean) << ','
         << fmt17(mex.stderr_) << ',' << (ch.empty() ? std::string{} : fmt17(mch.mean)) << ','
         << (ch.empty() ? std::string{} : fmt17(mch.stderr_)) << ',' << fmt17(mq.mean) << ',' << fmt17(mq.stderr_)
         << ',' << fmt17(mu.mean) << '\n';
    }
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << contents;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

// Runs every (algorithm, epsilon, run) cell on a worker group. Results land in a
// preallocated slot per cell; the collector then writes files in cell order, so
// output bytes do not depend on scheduling. Wall times go to timing.csv only.
inline ExperimentSummary run_experiment(const ExperimentConfig& c, bool write_outputs = true) {
  const PreparedExperiment p = prepare(c);
  struct Cell {
    Algorithm algo;
    std::size_t eps, run;
  };
  std::vector<Cell> cells;
  for (auto a : c.algorithms)
    for (std::size_t e = 0; e < c.epsilons.size(); ++e)
      for (std::size_t r = 0; r < c.n_runs; ++r) cells.push_back({a, e, r});

  std::vector<RunRecord> out(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        out[i] = execute_run(c, p, cells[i].algo, cells[i].eps, cells[i].run);
      } catch (...) {
        std::lock_guard lk(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(c.workers, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  ExperimentSummary s;
  s.records = std::move(out);
  for (const auto& r : s.records) s.audit_violations += r.audit_violations;

  if (write_outputs) {
    const std::filesystem::path dir(c.out_dir);
    std::filesystem::create_directories(dir);
    write_file(dir / "records.csv", records_csv(s.records));
    write_file(dir / "aggregate.csv", aggregate_csv(c, s.records));
    std::ostringstream timing;
    timing << "algorithm,epsilon,run,wall_seconds\n";
    for (const auto& r : s.records) {
      write_file(dir / r.trace_file, r.trace_csv);
      if (c.write_logs) {
        std::string log_name = r.trace_file;
        log_name.replace(0, 5, "log");
        write_file(dir / log_name, r.log_csv);
      }
      timing << to_string(r.algorithm) << ',' << fmt17(r.epsilon) << ',' << r.run << ',' << fmt17(r.wall_seconds) << '\n';
    }
    write_file(dir / "timing.csv", timing.str());
    nlohmann::json meta{{"config", to_json(c)},
                        {"config_hash", config_hash(c)},
                        {"theta_val", p.theta_val},
                        {"theta_source", p.theta_source},
                        {"pdim", p.pdim},
                        {"vcdim", p.vcdim},
                        {"pool_size", p.pool.size()},
                        {"pool_eta_index", p.pool.eta_index ? nlohmann::json(*p.pool.eta_index) : nlohmann::json()},
                        {"pool_approx_kappa", p.pool.approx_kappa.value_or(-1.0)},
                        {"audit_violations", s.audit_violations}};
    write_file(dir / "run_meta.json", meta.dump(2) + "\n");
  }
  return s;
}

}  // namespace ncal
