#include "cocrt/power.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cocrt/error.hpp"
#include "cocrt/matstat/distributions.hpp"

namespace cocrt {

EffectDistribution EffectDistribution::from_omega(const Matrix& omega) {
  EffectDistribution d;
  d.omega = symmetrize(omega);
  d.omega_diag = d.omega.diagonal();
  require((d.omega_diag.array() > 0.0).all(), "Omega_beta must have a positive diagonal",
          ErrorCode::NotPositiveDefinite);
  const Vector sd = d.omega_diag.cwiseSqrt();
  d.wald_corr = d.omega.cwiseQuotient(sd * sd.transpose());
  d.wald_corr.diagonal().setOnes();
  return d;
}

EffectDistribution omega_equal(const VarianceComponents& vc, double m, double sigma_z2) {
  require(m >= 1.0, "cluster size must be >= 1");
  require(sigma_z2 > 0.0, "sigma_z2 must be positive");
  return EffectDistribution::from_omega((vc.sigma_e() + m * vc.sigma_phi()) / (m * sigma_z2));
}

Matrix correction_matrix(const VarianceComponents& vc, double m_bar, double cv) {
  require(cv >= 0.0 && std::isfinite(cv), "cv must be finite and >= 0");
  require(m_bar >= 1.0, "m_bar must be >= 1");
  const int k = vc.k();
  if (cv == 0.0) return Matrix::Identity(k, k);

  const SpdMatrix a(symmetrize(vc.sigma_e() + m_bar * vc.sigma_phi()));
  const Matrix a_inv = invert_spd(a).matrix();
  const Matrix inner = m_bar * vc.sigma_phi() * a_inv * vc.sigma_e() * a_inv;
  const Matrix bracket = Matrix::Identity(k, k) - cv * cv * inner;

  Eigen::EigenSolver<Matrix> es(bracket, /*computeEigenvectors=*/false);
  const auto& ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (!(ev[i].real() > 1e-10) || std::abs(ev[i].imag()) > 1e-8) {
      throw Error(ErrorCode::DegenerateCorrection,
                  "correction bracket has eigenvalue " + std::to_string(ev[i].real()) +
                      "; cv = " + std::to_string(cv) + " is outside the approximation's range");
    }
  }
  return bracket.inverse();
}

double correction_factor(double rho0, double m_bar, double cv) {
  require(rho0 >= 0.0 && rho0 < 1.0, "rho0 must lie in [0, 1)");
  const double vif = 1.0 + (m_bar - 1.0) * rho0;
  const double denom = 1.0 - cv * cv * m_bar * rho0 * (1.0 - rho0) / (vif * vif);
  require(denom > 0.0, "correction factor is undefined for this cv",
          ErrorCode::DegenerateCorrection);
  return 1.0 / denom;
}

EffectDistribution omega_unequal(const VarianceComponents& vc, double m_bar, double cv,
                                 double sigma_z2) {
  require(sigma_z2 > 0.0, "sigma_z2 must be positive");
  const Matrix base = (vc.sigma_e() + m_bar * vc.sigma_phi()) / (m_bar * sigma_z2);
  if (cv == 0.0) return EffectDistribution::from_omega(base);
  return EffectDistribution::from_omega(base * correction_matrix(vc, m_bar, cv));
}

EffectDistribution effect_distribution(const VarianceComponents& vc, const DesignSpec& design) {
  if (design.cv == 0.0) return omega_equal(vc, design.m_bar, design.sigma_z2());
  return omega_unequal(vc, design.m_bar, design.cv, design.sigma_z2());
}

PowerResult glh_power(const EffectDistribution& dist, const TestSpec& test, int n,
                      double alpha) {
  const int k = static_cast<int>(dist.omega.rows());
  test.validate(k);
  require(test.is_glh(), "glh_power needs an omnibus, homogeneity or custom test");
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  const Matrix l = test.contrast_matrix(k);
  const Vector delta = test.alternative(k);
  const int s = static_cast<int>(l.rows());
  const int df_den = n - s - k;
  if (df_den < 1) {
    throw Error(ErrorCode::InsufficientDf, "n = " + std::to_string(n) + " leaves " +
                                               std::to_string(df_den) +
                                               " denominator degrees of freedom");
  }
  const SpdMatrix middle(symmetrize(l * dist.omega * l.transpose()));
  const double tau = n * delta.dot(solve_spd(middle, delta).col(0));

  PowerResult r;
  r.noncentrality = tau;
  r.df_num = s;
  r.df_den = df_den;
  const double crit = central_f_quantile(1.0 - alpha, s, df_den);
  r.critical_values = {crit};
  r.power = (tau == 0.0) ? alpha : noncentral_f_sf(crit, s, df_den, tau);
  return r;
}

PowerResult iu_power(const EffectDistribution& dist, const Vector& beta, int n, double alpha,
                     const PowerOptions& options) {
  const int k = static_cast<int>(dist.omega.rows());
  require(beta.size() == k && beta.allFinite(), "beta must have K finite entries");
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  const int df = n - 2 * k;
  if (df < 1) {
    throw Error(ErrorCode::InsufficientDf,
                "n = " + std::to_string(n) + " leaves " + std::to_string(df) +
                    " degrees of freedom for the intersection-union test");
  }
  const double crit = student_t_quantile(1.0 - alpha, df);
  std::vector<double> lower(k, crit);
  std::vector<double> eta(k);
  for (int i = 0; i < k; ++i) {
    eta[i] = std::sqrt(static_cast<double>(n)) * beta[i] / std::sqrt(dist.omega_diag[i]);
  }
  MvtOptions mvt = options.mvt;
  mvt.kind = options.iu_kind;
  const auto res = mvt_rectangle(lower, eta, SpdMatrix(dist.wald_corr),
                                 options.iu_normal ? kInfiniteDf : df, mvt);
  PowerResult r;
  r.power = res.probability;
  r.mc_error = res.mc_error;
  r.df_den = df;
  r.critical_values = lower;
  return r;
}

PowerResult compute_power(const VarianceComponents& vc, const DesignSpec& design,
                          const TestSpec& test, const PowerOptions& options) {
  design.validate();
  test.validate(vc.k());
  const auto dist = effect_distribution(vc, design);
  if (test.kind == TestKind::IntersectionUnion) {
    return iu_power(dist, *test.beta, design.n, design.alpha, options);
  }
  return glh_power(dist, test, design.n, design.alpha);
}

namespace {

int df_floor(const TestSpec& test, int k) {
  if (test.kind == TestKind::IntersectionUnion) return 2 * k + 1;
  return static_cast<int>(test.contrast_matrix(k).rows()) + k + 1;
}

void check_target(double target, double alpha) {
  require(target > alpha && target < 1.0, "target power must lie in (alpha, 1)");
}

}  // namespace

SampleSizeResult solve_clusters(const VarianceComponents& vc, const DesignSpec& design,
                                const TestSpec& test, double target_power,
                                const SolverOptions& options) {
  check_target(target_power, design.alpha);
  require(options.step >= 1, "solver step must be >= 1");
  DesignSpec d = design;
  d.n = std::max(2, df_floor(test, vc.k()));
  d.n = ((d.n + options.step - 1) / options.step) * options.step;
  d.validate();
  test.validate(vc.k());
  const auto dist = effect_distribution(vc, d);

  auto eval = [&](int n) {
    if (test.kind == TestKind::IntersectionUnion) {
      return iu_power(dist, *test.beta, n, d.alpha, options.power);
    }
    return glh_power(dist, test, n, d.alpha);
  };

  std::optional<PowerResult> prev;
  for (int n = d.n; n <= options.ceiling; n += options.step) {
    PowerResult cur = eval(n);
    if (prev) {
      const double slack = prev->mc_error.value_or(0.0) + cur.mc_error.value_or(0.0) + 1e-12;
      if (cur.power < prev->power - slack) {
        throw Error(ErrorCode::Internal, "power decreased from n = " +
                                             std::to_string(n - options.step) + " to n = " +
                                             std::to_string(n));
      }
    }
    if (cur.power >= target_power) return {n, cur, prev};
    prev = cur;
  }
  throw Error(ErrorCode::Unattainable, "target power not reached within n <= " +
                                           std::to_string(options.ceiling));
}

SampleSizeResult solve_cluster_size(const VarianceComponents& vc, const DesignSpec& design,
                                    const TestSpec& test, double target_power,
                                    const SolverOptions& options) {
  check_target(target_power, design.alpha);
  DesignSpec d = design;
  d.m_bar = 1.0;
  d.validate();
  test.validate(vc.k());

  auto eval = [&](double m) {
    DesignSpec dm = d;
    dm.m_bar = m;
    return compute_power(vc, dm, test, options.power);
  };

  // As m_bar grows, Omega_beta -> Sigma_phi / sigma_z2 and the correction -> I.
  const PowerResult limit = eval(static_cast<double>(options.m_ceiling));
  if (limit.power < target_power) {
    throw Error(ErrorCode::Unattainable,
                "power plateaus at " + std::to_string(limit.power) +
                    " as the cluster size grows; the endpoint-specific ICCs cap it below " +
                    std::to_string(target_power));
  }

  int lo = 0;  // power(lo) < target (lo = 0 is a sentinel)
  int hi = 1;
  PowerResult hi_res = eval(hi);
  while (hi_res.power < target_power) {
    lo = hi;
    hi = std::min(hi * 2, options.m_ceiling);
    hi_res = eval(hi);
    if (hi == options.m_ceiling && hi_res.power < target_power) {
      throw Error(ErrorCode::Unattainable, "target power not reached for m_bar <= " +
                                               std::to_string(options.m_ceiling));
    }
  }
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    PowerResult r = eval(mid);
    if (r.power >= target_power) {
      hi = mid;
      hi_res = r;
    } else {
      lo = mid;
    }
  }
  SampleSizeResult out{hi, hi_res, std::nullopt};
  if (hi > 1) {
    out.previous = eval(hi - 1);
    if (out.previous->power >= target_power) {
      throw Error(ErrorCode::Internal, "power is not monotone in m_bar near " +
                                           std::to_string(hi));
    }
  }
  return out;
}

}  // namespace cocrt
