#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cocrt/core_types.hpp"
#include "cocrt/matstat/mvt.hpp"

namespace cocrt {

/// Joint large-sample distribution of sqrt(n) (beta_hat - beta).
struct EffectDistribution {
  Matrix omega;       // Omega_beta
  Vector omega_diag;  // omega_k^2
  Matrix wald_corr;   // Phi, correlation of the Wald statistics

  static EffectDistribution from_omega(const Matrix& omega);
};

struct PowerResult {
  double power = 0.0;
  std::optional<double> noncentrality;  // GLH tests
  double df_num = 0.0;                  // S for GLH, 0 for IU
  double df_den = 0.0;                  // n - S - K (GLH) or n - 2K (IU)
  std::vector<double> critical_values;
  std::optional<double> mc_error;  // IU tests
};

/// Omega_beta = (Sigma_e + m Sigma_phi) / (m sigma_z2) for equal cluster sizes m.
EffectDistribution omega_equal(const VarianceComponents& vc, double m, double sigma_z2);

/// Second-order correction for variable cluster sizes:
///   Theta = [I - cv^2 m_bar Sigma_phi A^{-1} Sigma_e A^{-1}]^{-1},  A = Sigma_e + m_bar Sigma_phi.
/// Throws Error(DegenerateCorrection) when the bracketed matrix is singular or
/// has a non-positive eigenvalue.
Matrix correction_matrix(const VarianceComponents& vc, double m_bar, double cv);

/// Single-endpoint correction factor
///   [1 - cv^2 m_bar rho0 (1 - rho0) / (1 + (m_bar - 1) rho0)^2]^{-1}.
double correction_factor(double rho0, double m_bar, double cv);

/// Omega_beta for equal sizes at m_bar, right-multiplied by Theta and symmetrized.
EffectDistribution omega_unequal(const VarianceComponents& vc, double m_bar, double cv,
                                 double sigma_z2);

/// omega_equal when design.cv == 0, omega_unequal otherwise.
EffectDistribution effect_distribution(const VarianceComponents& vc, const DesignSpec& design);

struct PowerOptions {
  /// Wald statistics follow a multivariate t with df n - 2K.  Noncentral is
  /// the Kshirsagar form (mvtnorm's pmvt default); Shifted is the
  /// location-shifted central t.
  MvtKind iu_kind = MvtKind::Noncentral;
  /// Use the multivariate normal (df = infinity) for the rectangle probability.
  /// Critical values still use t(n - 2K).
  bool iu_normal = false;
  MvtOptions mvt{};
};

/// F-test power 1 - F_ncF(F_{1-alpha}(S, n-S-K); S, n-S-K, tau) with
/// tau = n delta^T (L Omega L^T)^{-1} delta.  Throws Error(InsufficientDf) when
/// n <= S + K.
PowerResult glh_power(const EffectDistribution& dist, const TestSpec& test, int n, double alpha);

/// Intersection-union power: P(zeta_k > t_{1-alpha}(n-2K) for all k) with
/// zeta centred at eta_k = sqrt(n) beta_k / omega_k and correlation Phi.
/// Throws Error(InsufficientDf) when n <= 2K.
PowerResult iu_power(const EffectDistribution& dist, const Vector& beta, int n, double alpha,
                     const PowerOptions& options = {});

/// Dispatches on test.kind using design.n.
PowerResult compute_power(const VarianceComponents& vc, const DesignSpec& design,
                          const TestSpec& test, const PowerOptions& options = {});

struct SolverOptions {
  int step = 2;          // even n by default
  int ceiling = 10000;   // largest n considered
  int m_ceiling = 10000000;
  PowerOptions power{};
};

struct SampleSizeResult {
  int value = 0;  // n or m_bar
  PowerResult achieved;
  std::optional<PowerResult> previous;  // at value - step (n) or value - 1 (m_bar)
};

/// Smallest n (multiple of options.step, df-feasible) with power >= target.
/// design.n is ignored.  Throws Error(Unattainable) past options.ceiling and
/// Error(Internal) if power drops along the scan by more than its Monte Carlo
/// error.
SampleSizeResult solve_clusters(const VarianceComponents& vc, const DesignSpec& design,
                                const TestSpec& test, double target_power,
                                const SolverOptions& options = {});

/// Smallest integer m_bar with power >= target at fixed design.n.  Throws
/// Error(Unattainable) if even the infinite-cluster-size limit falls short.
SampleSizeResult solve_cluster_size(const VarianceComponents& vc, const DesignSpec& design,
                                    const TestSpec& test, double target_power,
                                    const SolverOptions& options = {});

enum class GridAxis { Rho0, Rho1, Rho1Ratio, Rho2 };

const char* to_string(GridAxis axis);
GridAxis parse_grid_axis(const std::string& name);

struct AxisSpec {
  GridAxis axis;
  std::vector<double> values;
};

/// Baseline for a sensitivity grid.  Axis values overwrite the baseline ICCs:
///  - Rho0:      rho0[k] = v * rho0_multiplier[k]
///  - Rho1:      rho1 = v for every endpoint pair
///  - Rho1Ratio: rho1 = v * rho0[0] for every endpoint pair
///  - Rho2:      rho2 = v for every endpoint pair
/// Rho0 is applied first so that Rho1Ratio sees the updated rho0.
struct GridScenario {
  IccSet base;
  Vector rho0_multiplier;  // empty => all ones
  Vector beta;
  DesignSpec design;
  TestSpec test;
  PowerOptions power{};
};

struct GridCell {
  std::vector<double> coords;  // one per axis, in axis order
  bool feasible = false;
  double power = 0.0;
  double mc_error = 0.0;
  std::string note;  // reason when infeasible
};

/// Evaluates every combination of axis values (row-major, last axis fastest).
/// Cells whose ICCs do not give positive-definite variance components are
/// returned with feasible == false.  Cells may be evaluated on `threads`
/// worker threads; the output order and values do not depend on it.
std::vector<GridCell> power_grid(const GridScenario& scenario, std::span<const AxisSpec> axes,
                                 int threads = 1);

}  // namespace cocrt
