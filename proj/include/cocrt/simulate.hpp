#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cocrt/core_types.hpp"
#include "cocrt/dataset.hpp"
#include "cocrt/matstat/rng.hpp"
#include "cocrt/mlmm_em.hpp"

namespace cocrt {

/// Cluster sizes: round(m_bar) when cv == 0, otherwise Gamma(1/cv^2, m_bar cv^2)
/// draws rounded to the nearest integer and clamped below at kMinClusterSize.
inline constexpr int kMinClusterSize = 2;

std::vector<int> sample_cluster_sizes(double m_bar, double cv, int n, const RngStream& stream);

/// A random permutation with exactly n * z_bar treated clusters.  Throws
/// Error(InfeasibleAllocation) unless n * z_bar is an integer.
std::vector<int> allocate_arms(int n, double z_bar, const RngStream& stream);

/// Draws y_ij = gamma + beta z_i + phi_i + e_ij.  Cluster ids are 1..n.
TrialDataset simulate_trial(const EffectModel& effect, const VarianceComponents& vc,
                            std::span<const int> sizes, std::span<const int> arms,
                            const RngStream& stream);

struct SimulationScenario {
  VarianceComponents vc;
  EffectModel effect;
  DesignSpec design;
  TestSpec test;
};

struct SimulationOptions {
  int reps = 1000;
  std::uint64_t base_seed = 1;
  int threads = 1;
  EmOptions em{};
};

struct ReplicateOutcome {
  int index = 0;
  FitStatus status = FitStatus::NotConverged;
  bool used = false;      // counted in the rejection proportion
  bool rejected = false;
  double statistic = 0.0;  // min_k zeta_k (IU) or F* (GLH)
  int iterations = 0;
  bool loglik_ascent = true;
  Vector beta_hat;
  Vector se_beta;
};

struct SimulationReport {
  int replicates = 0;
  int used = 0;
  int rejections = 0;
  int excluded = 0;  // not converged, degenerate, or without standard errors
  double empirical_power = 0.0;
  double mc_se = 0.0;
  bool loglik_ascent = true;  // EM ascent held on every replicate
  std::vector<ReplicateOutcome> outcomes;
};

/// Simulates `reps` trials (replicate r draws from RngStream(base_seed, r)),
/// fits each by EM and applies the scenario's test.  Replicates whose fit does
/// not converge are excluded from the proportion and counted.
SimulationReport empirical_power(const SimulationScenario& scenario,
                                 const SimulationOptions& options);

/// empirical_power with the first treatment effect set to zero.
SimulationReport type_i_error(const SimulationScenario& scenario, const SimulationOptions& options);

}  // namespace cocrt
