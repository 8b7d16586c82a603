// Command-line front end: run experiments, verify the lower-bound instance,
// estimate disagreement coefficients.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ncal/ncal.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  return nlohmann::json::parse(f);
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& algorithms,
            const std::vector<double>& epsilons, const CLI::App& sub, std::size_t runs, std::uint64_t seed,
            std::size_t workers, const std::string& out) {
  auto j = load_json(config_path);
  if (!algorithms.empty()) {
    j.erase("algorithm");
    j["algorithms"] = algorithms;
  }
  if (!epsilons.empty()) {
    j.erase("epsilon");
    j["epsilons"] = epsilons;
  }
  if (sub.count("--runs")) j["n_runs"] = runs;
  if (sub.count("--seed")) j["master_seed"] = seed;
  if (sub.count("--workers")) j["workers"] = workers;
  if (sub.count("--out")) j["out_dir"] = out;
  const auto cfg = ncal::config_from_json(j);
  const auto summary = ncal::run_experiment(cfg);
  std::cout << "runs: " << summary.records.size() << "  audit violations: " << summary.audit_violations
            << "  output: " << cfg.out_dir << '\n';
  return summary.audit_violations == 0 ? 0 : 2;
}

int cmd_lower_bound(double gamma, std::size_t dim, std::size_t K, std::uint64_t seed, std::size_t max_points) {
  ncal::LowerBoundOptions opt;
  opt.seed = seed;
  opt.packing.max_points = max_points;
  const auto r = ncal::verify_lower_bound_instance(gamma, dim, K, opt);
  std::cout << ncal::to_json(r).dump(2) << '\n';
  return r.bound_holds ? 0 : 2;
}

int cmd_estimate_theta(const std::string& config_path) {
  const auto j = load_json(config_path);
  const auto cfg = ncal::config_from_json(j);
  const auto p = ncal::prepare(cfg);
  const auto t = j.value("theta", nlohmann::json::object());
  const double eps0 = t.value("eps0", 0.01);
  const std::size_t n_grid = t.value("grid_points", std::size_t{32});
  const std::size_t n_mc = t.value("n_mc", std::size_t{20'000});
  const std::uint64_t seed = t.value("seed", cfg.master_seed);
  const std::size_t center = p.pool.eta_index.value_or(0);

  ncal::Stream rng_c = ncal::Stream::derive(seed, 0, ncal::Purpose::estimate);
  ncal::Stream rng_v = ncal::Stream::derive(seed, 1, ncal::Purpose::estimate);
  const auto eps_grid = ncal::log_grid(eps0 * 1.0001, 1.0, n_grid);
  const auto cls = ncal::estimate_classifier_dis_coeff(p.classifiers, center, eps0, eps_grid, n_mc, p.instance, rng_c);
  const double gamma0 = cfg.gamma / 4.0;
  const auto gamma_grid = ncal::log_grid(gamma0 * 1.0001, 0.5, n_grid);
  const auto val = ncal::estimate_value_dis_coeff(p.pool, center, gamma0, gamma_grid, eps_grid, n_mc, p.instance, rng_v);
  nlohmann::json out{{"config_hash", ncal::config_hash(cfg)},
                     {"center_index", center},
                     {"seed", seed},
                     {"classifier_dis_coeff", cls},
                     {"value_dis_coeff", val},
                     {"eps_grid", eps_grid},
                     {"gamma_grid", gamma_grid}};
  out["classifier_dis_coeff"]["seed"] = seed;
  out["value_dis_coeff"]["seed"] = seed;
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation harness for deep active learning with abstention"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::string> algorithms;
  std::vector<double> epsilons;
  std::size_t runs = 1, workers = 1;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "run a configured experiment");
  run->add_option("--config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--algorithm", algorithms, "neuralcal | neuralcalpp | passive-erm (repeatable)");
  run->add_option("--epsilon", epsilons, "target excess error (repeatable)");
  run->add_option("--runs", runs, "seeded runs per epsilon");
  run->add_option("--seed", seed, "master seed");
  run->add_option("--workers", workers, "worker threads");
  run->add_option("--out", out_dir, "output directory");

  double gamma = 1.0 / 16.0;
  std::size_t dim = 2, K = 0, max_points = 12;
  std::uint64_t lb_seed = 0;
  auto* lb = app.add_subcommand("verify-lower-bound", "exhaustive check of the single-ReLU hard instance");
  lb->add_option("--gamma", gamma, "abstention parameter, in (0, 1/8)")->required();
  lb->add_option("--dim", dim, "ambient dimension (>= 2)")->required();
  lb->add_option("--queries", K, "label budget K")->required();
  lb->add_option("--seed", lb_seed, "packing seed");
  lb->add_option("--max-points", max_points, "packing size cap");

  std::string theta_config;
  auto* th = app.add_subcommand("estimate-theta", "Monte-Carlo disagreement coefficients of a configured pool");
  th->add_option("--config", theta_config, "experiment JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_path, algorithms, epsilons, *run, runs, seed, workers, out_dir);
    if (*lb) return cmd_lower_bound(gamma, dim, K, lb_seed, max_points);
    if (*th) return cmd_estimate_theta(theta_config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
