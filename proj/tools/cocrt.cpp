// cocrt: power, sample size, simulation and model fitting for cluster
// randomized trials with co-primary continuous endpoints.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cocrt/dataset.hpp"
#include "cocrt/error.hpp"
#include "cocrt/mlmm_em.hpp"
#include "cocrt/parallel.hpp"
#include "cocrt/power.hpp"
#include "cocrt/scenario.hpp"
#include "cocrt/simulate.hpp"

using namespace cocrt;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct Common {
  std::string scenario;
  std::string test;
  std::string out;
  std::string format = "json";
  std::optional<int> n;
  std::optional<double> m_bar;
  int threads = 0;
};

void emit(const Common& c, const Json& json, const std::string& csv) {
  if (c.out.empty()) return;
  std::ofstream f(c.out);
  require(static_cast<bool>(f), "cannot write '" + c.out + "'");
  if (c.format == "csv") f << csv;
  else f << json.dump(2) << '\n';
}

Scenario load(const Common& c) {
  Scenario sc = load_scenario(c.scenario);
  if (!c.test.empty()) {
    sc.test.kind = parse_test_kind(c.test);
    if (sc.test.kind != TestKind::CustomGLH) {
      sc.test.contrast.reset();
      sc.test.delta.reset();
    }
    sc.test.validate(sc.k());
  }
  if (c.n) {
    sc.design.n = *c.n;
    sc.has_n = true;
  }
  if (c.m_bar) {
    sc.design.m_bar = *c.m_bar;
    sc.has_m_bar = true;
  }
  if (c.threads > 0) sc.threads = c.threads;
  if (sc.threads == 0) sc.threads = default_threads();
  return sc;
}

void need_design(const Scenario& sc) {
  require(sc.has_n, "design.n is required for this command");
  require(sc.has_m_bar, "design.m_bar is required for this command");
  sc.design.validate();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string power_csv(const PowerResult& r) {
  std::ostringstream s;
  s << std::setprecision(10) << "power,mc_error,noncentrality,df_num,df_den\n"
    << r.power << ',' << (r.mc_error ? *r.mc_error : 0.0) << ','
    << (r.noncentrality ? std::to_string(*r.noncentrality) : "NA") << ',' << r.df_num << ','
    << r.df_den << '\n';
  return s.str();
}

int cmd_power(const Common& c) {
  const Scenario sc = load(c);
  need_design(sc);
  const PowerResult r = compute_power(sc.vc, sc.design, sc.test, sc.solver.power);
  std::cout << to_string(sc.test.kind) << " power at n=" << sc.design.n
            << ", m_bar=" << sc.design.m_bar << ", cv=" << sc.design.cv << ": " << fmt(r.power);
  if (r.mc_error) std::cout << " (+/- " << fmt(*r.mc_error, 5) << ")";
  std::cout << '\n';
  emit(c, Json{{"scenario", to_json(sc)}, {"result", to_json(r)}}, power_csv(r));
  return 0;
}

int cmd_samplesize(const Common& c, const std::string& solve_flag, std::optional<double> target) {
  Scenario sc = load(c);
  if (target) sc.target_power = *target;
  require(sc.target_power > sc.design.alpha && sc.target_power < 1.0,
          "target power must lie in (alpha, 1)");
  std::optional<SolveFor> what = sc.solve;
  if (solve_flag == "n") what = SolveFor::ClusterCount;
  if (solve_flag == "m") what = SolveFor::ClusterSize;
  if (!what) {
    require(sc.has_n != sc.has_m_bar, "omit exactly one of design.n and design.m_bar, or pass --solve");
    what = sc.has_n ? SolveFor::ClusterSize : SolveFor::ClusterCount;
  }
  SampleSizeResult r;
  if (*what == SolveFor::ClusterCount) {
    require(sc.has_m_bar, "design.m_bar is required to solve for n");
    r = solve_clusters(sc.vc, sc.design, sc.test, sc.target_power, sc.solver);
    std::cout << "required clusters n = " << r.value;
  } else {
    require(sc.has_n, "design.n is required to solve for m_bar");
    r = solve_cluster_size(sc.vc, sc.design, sc.test, sc.target_power, sc.solver);
    std::cout << "required mean cluster size m_bar = " << r.value;
  }
  std::cout << " (" << to_string(sc.test.kind) << ", power " << fmt(r.achieved.power);
  if (r.previous) std::cout << "; " << fmt(r.previous->power) << " one step below";
  std::cout << ", target " << sc.target_power << ")\n";

  std::ostringstream csv;
  csv << std::setprecision(10) << "solve,value,power,previous_power\n"
      << (*what == SolveFor::ClusterCount ? "n" : "m") << ',' << r.value << ',' << r.achieved.power
      << ',' << (r.previous ? std::to_string(r.previous->power) : "NA") << '\n';
  Json j = to_json(r);
  j["solve"] = *what == SolveFor::ClusterCount ? "n" : "m";
  j["target_power"] = sc.target_power;
  emit(c, Json{{"scenario", to_json(sc)}, {"result", j}}, csv.str());
  return 0;
}

int cmd_simulate(const Common& c, std::optional<int> reps, std::optional<std::uint64_t> seed,
                 bool null_effect, const std::string& outcomes_path) {
  Scenario sc = load(c);
  if (reps) {
    require(*reps >= 1, "--reps must be >= 1");
    sc.reps = *reps;
  }
  if (seed) sc.seed = *seed;
  need_design(sc);
  SimulationOptions opt;
  opt.reps = sc.reps;
  opt.base_seed = sc.seed;
  opt.threads = sc.threads;
  const auto t0 = std::chrono::steady_clock::now();
  const SimulationReport r = null_effect ? type_i_error(sc.simulation(), opt)
                                         : empirical_power(sc.simulation(), opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << (null_effect ? "empirical type I error " : "empirical power ") << fmt(r.empirical_power)
            << " (se " << fmt(r.mc_se) << ") over " << r.used << " of " << r.replicates
            << " replicates; " << r.excluded << " excluded; " << fmt(secs, 1) << " s\n";

  std::ostringstream csv;
  write_outcomes_csv(csv, r);
  if (!outcomes_path.empty()) {
    std::ofstream f(outcomes_path);
    require(static_cast<bool>(f), "cannot write '" + outcomes_path + "'");
    f << csv.str();
  }
  Json j = to_json(r, c.format == "json");
  j["null_effect"] = null_effect;
  emit(c, Json{{"scenario", to_json(sc)}, {"result", j}}, csv.str());
  return 0;
}

int cmd_generate(const Common& c, std::optional<std::uint64_t> seed) {
  Scenario sc = load(c);
  if (seed) sc.seed = *seed;
  need_design(sc);
  require(!c.out.empty(), "--out is required");
  const RngStream stream(sc.seed, 0);
  const auto sizes = sample_cluster_sizes(sc.design.m_bar, sc.design.cv, sc.design.n, stream.substream(0));
  const auto arms = allocate_arms(sc.design.n, sc.design.z_bar, stream.substream(1));
  const TrialDataset data = simulate_trial(sc.effect, sc.vc, sizes, arms, stream.substream(2));
  std::ofstream f(c.out);
  require(static_cast<bool>(f), "cannot write '" + c.out + "'");
  write_trial_csv(f, data);
  std::cout << "wrote " << data.n_subjects() << " subjects in " << data.n_clusters()
            << " clusters to " << c.out << '\n';
  return 0;
}

int cmd_fit(const Common& c, const std::string& data_path, double tol, int max_iter, double alpha) {
  const TrialDataset data = read_trial_csv_file(data_path);
  EmOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  const FitResult fit = em_fit(data, opt);
  const int k = data.k();
  Json j = to_json(fit);
  j["icc"] = nullptr;
  if (fit.status != FitStatus::DegenerateData) {
    const IccSet icc = components_to_icc(VarianceComponents(fit.sigma_phi_hat, fit.sigma_e_hat));
    j["icc"] = {{"rho0", vector_to_json(icc.rho0())},
                {"rho1", matrix_to_json(icc.rho1())},
                {"rho2", matrix_to_json(icc.rho2())},
                {"sigma_y2", vector_to_json(icc.sigma_y2())}};
  }
  if (fit.se_available && fit.n_clusters > 2 * k) {
    const IuDecision d = wald_iu_decision(fit, alpha);
    j["iu"] = {{"critical", d.critical}, {"reject", d.reject}};
  }
  std::cout << "status " << to_string(fit.status) << " after " << fit.iterations
            << " iterations, loglik " << fmt(fit.loglik, 6) << '\n';
  for (int i = 0; i < k; ++i) {
    std::cout << "  beta" << i + 1 << " = " << fmt(fit.beta()[i]) << "  se " << fmt(fit.se_beta[i])
              << "  z " << fmt(fit.wald[i], 3) << '\n';
  }
  if (!fit.message.empty()) std::cout << "  note: " << fit.message << '\n';

  std::ostringstream csv;
  csv << std::setprecision(10) << "endpoint,gamma_tilde,beta,se_beta,wald\n";
  for (int i = 0; i < k; ++i) {
    csv << i + 1 << ',' << fit.theta_hat[i] << ',' << fit.beta()[i] << ',' << fit.se_beta[i] << ','
        << fit.wald[i] << '\n';
  }
  emit(c, Json{{"data", data_path}, {"result", j}}, csv.str());
  return fit.status == FitStatus::NotConverged ? kExitNumerical : 0;
}

int cmd_contour(const Common& c, const std::vector<std::string>& axis_flags,
                const std::vector<double>& multiplier) {
  Scenario sc = load(c);
  need_design(sc);
  require(!axis_flags.empty(), "at least one --axis is required");
  std::vector<AxisSpec> axes;
  for (const auto& a : axis_flags) axes.push_back(parse_axis_flag(a));
  const IccSet base = sc.icc ? *sc.icc : components_to_icc(sc.vc);
  Vector mult;
  if (!multiplier.empty()) {
    require(static_cast<int>(multiplier.size()) == sc.k(), "--rho0-multiplier needs K values");
    mult = Eigen::Map<const Vector>(multiplier.data(), sc.k());
  }
  GridScenario g{base, mult, sc.effect.beta, sc.design, sc.test, sc.solver.power};
  const auto cells = power_grid(g, axes, sc.threads);

  double lo = 1.0, hi = 0.0;
  int feasible = 0;
  for (const auto& cell : cells) {
    if (!cell.feasible) continue;
    ++feasible;
    lo = std::min(lo, cell.power);
    hi = std::max(hi, cell.power);
  }
  std::cout << to_string(sc.test.kind) << " grid: " << cells.size() << " cells, " << feasible
            << " feasible";
  if (feasible > 0) std::cout << ", power in [" << fmt(lo) << ", " << fmt(hi) << "]";
  std::cout << '\n';

  std::ostringstream csv;
  write_grid_csv(csv, axes, cells);
  if (c.out.empty()) std::cout << csv.str();
  emit(c, Json{{"scenario", to_json(sc)}, {"result", to_json(axes, cells)}}, csv.str());
  return 0;
}

void add_common(CLI::App* cmd, Common& c, bool scenario_required = true) {
  auto* opt = cmd->add_option("--scenario", c.scenario, "scenario JSON file");
  if (scenario_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--test", c.test, "override the test kind")
      ->check(CLI::IsMember({"omnibus", "homogeneity", "iu", "custom"}));
  cmd->add_option("--n", c.n, "override design.n");
  cmd->add_option("--m-bar", c.m_bar, "override design.m_bar");
  cmd->add_option("--threads", c.threads, "worker threads (default: all cores)");
}

void add_output(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "write machine-readable output here");
  cmd->add_option("--format", c.format, "output format")->check(CLI::IsMember({"json", "csv"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power, sample size and simulation for cluster randomized trials with co-primary endpoints"};
  app.require_subcommand(1);

  Common c;
  auto* power = app.add_subcommand("power", "analytic power for the scenario's design");
  add_common(power, c);
  add_output(power, c);

  std::string solve;
  std::optional<double> target;
  auto* ss = app.add_subcommand("samplesize", "smallest n (or m_bar) reaching the target power");
  add_common(ss, c);
  add_output(ss, c);
  ss->add_option("--solve", solve, "what to solve for")->check(CLI::IsMember({"n", "m"}));
  ss->add_option("--target", target, "target power (default from scenario, else 0.8)");

  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  bool null_effect = false;
  std::string outcomes;
  auto* sim = app.add_subcommand("simulate", "empirical power by simulation and EM fitting");
  add_common(sim, c);
  add_output(sim, c);
  sim->add_option("--reps", reps, "number of simulated trials");
  sim->add_option("--seed", seed, "base seed");
  sim->add_flag("--null", null_effect, "zero the first effect (empirical type I error)");
  sim->add_option("--outcomes", outcomes, "per-replicate CSV");

  auto* gen = app.add_subcommand("generate", "simulate one trial dataset as CSV");
  add_common(gen, c);
  gen->add_option("--out", c.out, "output CSV")->required();
  gen->add_option("--seed", seed, "seed");

  std::string data;
  double tol = 1e-8;
  int max_iter = 5000;
  double alpha = 0.05;
  auto* fit = app.add_subcommand("fit", "fit the mixed model to a trial CSV by EM");
  fit->add_option("--data", data, "trial CSV (cluster_id,arm,y1..yK)")->required()->check(CLI::ExistingFile);
  fit->add_option("--tol", tol, "relative log-likelihood tolerance");
  fit->add_option("--max-iter", max_iter, "iteration cap");
  fit->add_option("--alpha", alpha, "level for the intersection-union decision");
  add_output(fit, c);

  std::vector<std::string> axes;
  std::vector<double> multiplier;
  auto* contour = app.add_subcommand("contour", "power over a grid of ICC values");
  add_common(contour, c);
  add_output(contour, c);
  contour->add_option("--axis", axes, "name=lo:hi:count or name=a,b,c; names rho0, rho1, rho1_ratio, rho2")
      ->required();
  contour->add_option("--rho0-multiplier", multiplier, "per-endpoint factors applied to rho0 axis values")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*power) return cmd_power(c);
    if (*ss) return cmd_samplesize(c, solve, target);
    if (*sim) return cmd_simulate(c, reps, seed, null_effect, outcomes);
    if (*gen) return cmd_generate(c, seed);
    if (*fit) return cmd_fit(c, data, tol, max_iter, alpha);
    if (*contour) return cmd_contour(c, axes, multiplier);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_numerical(e.code()) ? kExitNumerical : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return 0;
}
