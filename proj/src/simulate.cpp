#include "cocrt/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cocrt/error.hpp"
#include "cocrt/parallel.hpp"

namespace cocrt {

std::vector<int> sample_cluster_sizes(double m_bar, double cv, int n, const RngStream& stream) {
  require(n >= 1, "sample_cluster_sizes: n must be >= 1");
  require(m_bar >= 1.0 && std::isfinite(m_bar), "sample_cluster_sizes: m_bar must be >= 1");
  require(cv >= 0.0 && std::isfinite(cv), "sample_cluster_sizes: cv must be >= 0");
  std::vector<int> sizes(n);
  if (cv == 0.0) {
    std::fill(sizes.begin(), sizes.end(), static_cast<int>(std::lround(m_bar)));
    return sizes;
  }
  const auto draws = rng_gamma(stream, 1.0 / (cv * cv), m_bar * cv * cv, n);
  for (int i = 0; i < n; ++i) {
    sizes[i] = std::max(kMinClusterSize, static_cast<int>(std::lround(draws[i])));
  }
  return sizes;
}

std::vector<int> allocate_arms(int n, double z_bar, const RngStream& stream) {
  require(n >= 1, "allocate_arms: n must be >= 1");
  require(z_bar > 0.0 && z_bar < 1.0, "allocate_arms: z_bar must lie in (0, 1)");
  const double treated = n * z_bar;
  const long rounded = std::lround(treated);
  if (std::abs(treated - rounded) > 1e-9) {
    throw Error(ErrorCode::InfeasibleAllocation,
                "n * z_bar = " + std::to_string(treated) + " is not an integer");
  }
  std::vector<int> arms(n, 0);
  std::fill_n(arms.begin(), rounded, 1);
  Engine eng = stream.engine();
  std::shuffle(arms.begin(), arms.end(), eng);
  return arms;
}

TrialDataset simulate_trial(const EffectModel& effect, const VarianceComponents& vc,
                            std::span<const int> sizes, std::span<const int> arms,
                            const RngStream& stream) {
  const int k = vc.k();
  require(effect.gamma.size() == k && effect.beta.size() == k,
          "simulate_trial: effect vectors must have K entries");
  require(sizes.size() == arms.size() && !sizes.empty(),
          "simulate_trial: sizes and arms must have one entry per cluster");
  const Matrix f_phi = psd_factor(vc.sigma_phi());
  const Matrix f_e = psd_factor(vc.sigma_e());

  TrialDataset data;
  const int total = std::accumulate(sizes.begin(), sizes.end(), 0);
  data.y.resize(total, k);
  data.subject_cluster.reserve(total);
  data.clusters.reserve(sizes.size());

  Engine eng = stream.engine();
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(k);
  int row = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    require(sizes[i] >= 1, "simulate_trial: cluster sizes must be >= 1");
    require(arms[i] == 0 || arms[i] == 1, "simulate_trial: arms must be 0 or 1");
    data.clusters.push_back({static_cast<long>(i + 1), arms[i], sizes[i]});
    for (int d = 0; d < k; ++d) z[d] = normal(eng);
    const Vector mu = effect.gamma + effect.beta * arms[i] + f_phi * z;
    for (int j = 0; j < sizes[i]; ++j) {
      for (int d = 0; d < k; ++d) z[d] = normal(eng);
      data.y.row(row++) = (mu + f_e * z).transpose();
      data.subject_cluster.push_back(static_cast<int>(i));
    }
  }
  return data;
}

namespace {

ReplicateOutcome run_replicate(const SimulationScenario& sc, const SimulationOptions& opt,
                               int index) {
  const RngStream stream(opt.base_seed, static_cast<std::uint64_t>(index));
  const auto sizes = sample_cluster_sizes(sc.design.m_bar, sc.design.cv, sc.design.n,
                                          stream.substream(0));
  const auto arms = allocate_arms(sc.design.n, sc.design.z_bar, stream.substream(1));
  const TrialDataset data = simulate_trial(sc.effect, sc.vc, sizes, arms, stream.substream(2));

  EmOptions em = opt.em;
  em.keep_trace = true;
  const FitResult fit = em_fit(data, em);

  ReplicateOutcome out;
  out.index = index;
  out.status = fit.status;
  out.iterations = fit.iterations;
  out.beta_hat = fit.beta();
  out.se_beta = fit.se_beta;
  for (std::size_t t = 1; t < fit.loglik_trace.size(); ++t) {
    if (fit.loglik_trace[t] < fit.loglik_trace[t - 1] - 1e-10) out.loglik_ascent = false;
  }
  if (fit.status != FitStatus::Converged || !fit.se_available) return out;

  out.used = true;
  if (sc.test.kind == TestKind::IntersectionUnion) {
    const auto d = wald_iu_decision(fit, sc.design.alpha);
    out.rejected = d.reject;
    out.statistic = d.zeta.minCoeff();
  } else {
    const auto d = wald_glh_decision(fit, sc.test, sc.design.alpha);
    out.rejected = d.reject;
    out.statistic = d.f_stat;
  }
  return out;
}

}  // namespace

SimulationReport empirical_power(const SimulationScenario& scenario,
                                 const SimulationOptions& options) {
  require(options.reps >= 1, "simulation needs reps >= 1");
  scenario.design.validate();
  scenario.test.validate(scenario.vc.k());
  require(scenario.effect.beta.size() == scenario.vc.k() &&
              scenario.effect.gamma.size() == scenario.vc.k(),
          "effect vectors must have K entries");

  SimulationReport report;
  report.replicates = options.reps;
  report.outcomes.resize(options.reps);
  parallel_for(static_cast<std::size_t>(options.reps), options.threads, [&](std::size_t i) {
    report.outcomes[i] = run_replicate(scenario, options, static_cast<int>(i));
  });
  for (const auto& o : report.outcomes) {
    report.loglik_ascent = report.loglik_ascent && o.loglik_ascent;
    if (!o.used) {
      ++report.excluded;
      continue;
    }
    ++report.used;
    if (o.rejected) ++report.rejections;
  }
  if (report.used > 0) {
    const double p = static_cast<double>(report.rejections) / report.used;
    report.empirical_power = p;
    report.mc_se = std::sqrt(p * (1.0 - p) / report.used);
  }
  return report;
}

SimulationReport type_i_error(const SimulationScenario& scenario,
                              const SimulationOptions& options) {
  SimulationScenario null = scenario;
  null.effect.beta[0] = 0.0;
  if (null.test.beta) (*null.test.beta)[0] = 0.0;
  return empirical_power(null, options);
}

}  // namespace cocrt
