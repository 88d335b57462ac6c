#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cocrt/core_types.hpp"
#include "cocrt/dataset.hpp"

namespace cocrt {

// Maximum-likelihood fitting of the multivariate linear mixed model
//
//   y_ij = gamma_tilde + beta (z_i - z_bar) + phi_i + e_ij,
//   phi_i ~ N(0, Sigma_phi),  e_ij ~ N(0, Sigma_e),
//
// by EM with the random intercepts phi_i as missing data.  z_bar is the
// observed fraction of treated clusters.  All cluster-level work goes through
// sufficient statistics (size, mean, within-cluster scatter), so no m_i K x
// m_i K covariance is ever formed.

struct MlmmParams {
  Vector gamma_tilde;
  Vector beta;
  Matrix sigma_phi;
  Matrix sigma_e;
};

/// Per-cluster sufficient statistics.
struct ClusterStats {
  int m = 0;
  double x = 0.0;  // z_i - z_bar
  Vector mean;     // cluster mean of y_ij
  Matrix scatter;  // sum_j (y_ij - mean)(y_ij - mean)^T
};

struct DataSummary {
  std::vector<ClusterStats> clusters;
  double z_bar = 0.0;
  int n_subjects = 0;
  int k = 0;
};

DataSummary summarize(const TrialDataset& data);

/// Gaussian log-likelihood, using det V_i = det(Sigma_e)^{m_i - 1}
/// det(Sigma_e + m_i Sigma_phi) and the block form of V_i^{-1}.  Throws
/// Error(NotPositiveDefinite) if Sigma_e or Sigma_e + m_i Sigma_phi is not PD.
double loglik(const MlmmParams& params, const TrialDataset& data);
double loglik(const MlmmParams& params, const DataSummary& summary);

/// V_i^{-1} = I_m (x) within + J_m (x) between for a cluster of size m, where
/// V_i = I_m (x) Sigma_e + J_m (x) Sigma_phi.  within = Sigma_e^{-1} and
/// between = [(Sigma_e + m Sigma_phi)^{-1} - Sigma_e^{-1}] / m.
struct ClusterPrecision {
  Matrix within;
  Matrix between;
};

ClusterPrecision cluster_precision(const Matrix& sigma_phi, const Matrix& sigma_e, int m);

enum class FitStatus { Converged, NotConverged, DegenerateData };

const char* to_string(FitStatus status);

struct FitResult {
  Vector theta_hat;  // gamma_tilde (K) then beta (K)
  Matrix sigma_phi_hat;
  Matrix sigma_e_hat;
  Vector se_theta;   // NaN when unavailable
  Vector se_beta;
  Matrix cov_theta;  // inverse observed information, theta block
  Vector se_sigma_phi;  // vech (row-major lower triangle), NaN when unavailable
  Vector se_sigma_e;
  Vector wald;       // beta_hat / se_beta
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool se_available = false;
  // The full observed information was singular (usually Sigma_phi on the
  // boundary); theta SEs treat the variance components as known and the
  // variance-component SEs are NaN.
  bool se_theta_only = false;
  FitStatus status = FitStatus::NotConverged;
  std::string message;
  int n_clusters = 0;
  double z_bar = 0.0;
  std::vector<double> loglik_trace;  // filled when EmOptions::keep_trace

  Vector beta() const { return theta_hat.tail(theta_hat.size() / 2); }
  MlmmParams params() const;
};

struct EmOptions {
  double tol = 1e-8;  // relative log-likelihood change
  int max_iter = 5000;
  std::optional<MlmmParams> init;
  bool compute_se = true;
  bool keep_trace = false;
};

/// Moment-based starting values: pooled within-cluster covariance for
/// Sigma_e, between-cluster covariance of arm-centred cluster means minus
/// Sigma_e / m_bar (eigenvalues floored at 1e-8) for Sigma_phi, GLS for theta.
MlmmParams initial_params(const DataSummary& summary);

/// Fits the model.  Never throws on numerical trouble: non-convergence and
/// degenerate data (a missing arm, or every cluster of size 1) are reported
/// through FitResult::status.  Throws Error(InvalidArgument) for fewer than two
/// clusters.
FitResult em_fit(const TrialDataset& data, const EmOptions& options = {});

struct StandardErrors {
  Vector theta;
  Matrix cov_theta;
  Vector sigma_phi;  // vech SEs via the delta method
  Vector sigma_e;
  Matrix hessian;  // of loglik in the unconstrained parameterization
};

/// Observed-information standard errors from a central-difference Hessian of
/// the log-likelihood.  Parameters: theta, the Cholesky factor of Sigma_e with
/// log diagonal, and the Cholesky factor of Sigma_phi with a raw diagonal (so a
/// fit on the PSD boundary stays interior).  Step h = 1e-4 max(1, |p|).
/// Throws Error(SingularInformation) if the negative Hessian is not PD.
StandardErrors standard_errors(const FitResult& fit, const TrialDataset& data);
StandardErrors standard_errors(const MlmmParams& params, const DataSummary& summary);

struct IuDecision {
  Vector zeta;
  double critical = 0.0;
  std::vector<bool> endpoint_reject;
  bool reject = false;
};

/// Rejects iff zeta_k > t_{1-alpha}(n - 2K) for every k.
IuDecision wald_iu_decision(const FitResult& fit, double alpha);

struct GlhDecision {
  double f_stat = 0.0;
  double critical = 0.0;
  int df_num = 0;
  int df_den = 0;
  bool reject = false;
};

/// F* = (L b)^T (L cov(b) L^T)^{-1} (L b) / S against F_{1-alpha}(S, n - S - K).
GlhDecision wald_glh_decision(const FitResult& fit, const TestSpec& test, double alpha);

}  // namespace cocrt
