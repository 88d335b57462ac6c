#include "cocrt/mlmm_em.hpp"

#include <cmath>
#include <limits>

#include "cocrt/error.hpp"
#include "cocrt/matstat/distributions.hpp"

namespace cocrt {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Chol {
  Matrix l;
  double logdet = 0.0;
};

Chol factor_or_throw(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NotPositiveDefinite, std::string(what) + " is not positive definite");
  }
  Chol c;
  c.l = llt.matrixL();
  for (Eigen::Index i = 0; i < c.l.rows(); ++i) {
    if (!(c.l(i, i) > 0.0)) {
      throw Error(ErrorCode::NotPositiveDefinite, std::string(what) + " is not positive definite");
    }
    c.logdet += 2.0 * std::log(c.l(i, i));
  }
  return c;
}

Matrix chol_inverse(const Chol& c) {
  const auto n = c.l.rows();
  Matrix linv = c.l.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  return linv.transpose() * linv;
}

Vector chol_solve(const Chol& c, const Vector& b) {
  Vector y = c.l.triangularView<Eigen::Lower>().solve(b);
  return c.l.transpose().triangularView<Eigen::Upper>().solve(y);
}

// GLS for theta at fixed variance components, from cluster means.
// Normal equations sum_i W_i^T V_i^{-1} W_i theta = sum_i W_i^T V_i^{-1} y_i.
// The left-hand side is also the information for theta at fixed variances.
void gls_system(const DataSummary& s, const Matrix& sigma_phi, const Matrix& sigma_e,
                Matrix& lhs, Vector& rhs) {
  const int k = s.k;
  lhs = Matrix::Zero(2 * k, 2 * k);
  rhs = Vector::Zero(2 * k);
  for (const auto& c : s.clusters) {
    const Chol a = factor_or_throw(sigma_e + c.m * sigma_phi, "Sigma_e + m Sigma_phi");
    const Matrix w = c.m * chol_inverse(a);
    const Vector wy = w * c.mean;
    lhs.topLeftCorner(k, k) += w;
    lhs.topRightCorner(k, k) += c.x * w;
    lhs.bottomLeftCorner(k, k) += c.x * w;
    lhs.bottomRightCorner(k, k) += c.x * c.x * w;
    rhs.head(k) += wy;
    rhs.tail(k) += c.x * wy;
  }
  lhs = symmetrize(lhs);
}

Vector gls_theta(const DataSummary& s, const Matrix& sigma_phi, const Matrix& sigma_e) {
  Matrix lhs;
  Vector rhs;
  gls_system(s, sigma_phi, sigma_e, lhs, rhs);
  Eigen::LDLT<Matrix> ldlt(lhs);
  if (ldlt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularInformation, "GLS normal equations are singular");
  }
  return ldlt.solve(rhs);
}

Matrix floor_eigenvalues(const Matrix& a, double floor) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  Vector ev = es.eigenvalues().cwiseMax(floor);
  return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

int vech_size(int k) { return k * (k + 1) / 2; }

Vector vech(const Matrix& a) {
  const int k = static_cast<int>(a.rows());
  Vector v(vech_size(k));
  int idx = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j <= i; ++j) v[idx++] = a(i, j);
  return v;
}

// Unconstrained parameter vector used for the observed information.
struct Packing {
  int k;

  int size() const { return 2 * k + 2 * vech_size(k); }

  Vector pack(const MlmmParams& p) const {
    Vector v(size());
    v.head(k) = p.gamma_tilde;
    v.segment(k, k) = p.beta;
    Matrix le = Eigen::LLT<Matrix>(p.sigma_e).matrixL();
    Matrix lp = phi_factor(p.sigma_phi);
    int idx = 2 * k;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j <= i; ++j) v[idx++] = (i == j) ? std::log(le(i, i)) : le(i, j);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j <= i; ++j) v[idx++] = lp(i, j);
    return v;
  }

  MlmmParams unpack(const Vector& v) const {
    MlmmParams p;
    p.gamma_tilde = v.head(k);
    p.beta = v.segment(k, k);
    Matrix le = Matrix::Zero(k, k);
    Matrix lp = Matrix::Zero(k, k);
    int idx = 2 * k;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j <= i; ++j) le(i, j) = (i == j) ? std::exp(v[idx++]) : v[idx++];
    for (int i = 0; i < k; ++i)
      for (int j = 0; j <= i; ++j) lp(i, j) = v[idx++];
    p.sigma_e = le * le.transpose();
    p.sigma_phi = lp * lp.transpose();
    return p;
  }

  static Matrix phi_factor(const Matrix& sigma_phi) {
    const auto k = sigma_phi.rows();
    Eigen::LLT<Matrix> llt(sigma_phi);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    const double jitter = 1e-14 * std::max(1.0, sigma_phi.trace());
    return Eigen::LLT<Matrix>(sigma_phi + jitter * Matrix::Identity(k, k)).matrixL();
  }
};

}  // namespace

const char* to_string(FitStatus status) {
  switch (status) {
    case FitStatus::Converged: return "converged";
    case FitStatus::NotConverged: return "not_converged";
    case FitStatus::DegenerateData: return "degenerate_data";
  }
  return "unknown";
}

MlmmParams FitResult::params() const {
  const auto k = theta_hat.size() / 2;
  return {theta_hat.head(k), theta_hat.tail(k), sigma_phi_hat, sigma_e_hat};
}

DataSummary summarize(const TrialDataset& data) {
  data.validate();
  DataSummary s;
  s.k = data.k();
  s.n_subjects = data.n_subjects();
  const int n = data.n_clusters();
  s.clusters.resize(n);
  double treated = 0.0;
  for (int i = 0; i < n; ++i) {
    s.clusters[i].m = data.clusters[i].size;
    s.clusters[i].mean = Vector::Zero(s.k);
    s.clusters[i].scatter = Matrix::Zero(s.k, s.k);
    treated += data.clusters[i].arm;
  }
  s.z_bar = treated / n;
  for (int r = 0; r < data.n_subjects(); ++r) {
    s.clusters[data.subject_cluster[r]].mean += data.y.row(r).transpose();
  }
  for (int i = 0; i < n; ++i) {
    s.clusters[i].mean /= s.clusters[i].m;
    s.clusters[i].x = data.clusters[i].arm - s.z_bar;
  }
  for (int r = 0; r < data.n_subjects(); ++r) {
    auto& c = s.clusters[data.subject_cluster[r]];
    const Vector d = data.y.row(r).transpose() - c.mean;
    c.scatter += d * d.transpose();
  }
  return s;
}

double loglik(const MlmmParams& p, const DataSummary& s) {
  const int k = s.k;
  require(p.gamma_tilde.size() == k && p.beta.size() == k && p.sigma_phi.rows() == k &&
              p.sigma_e.rows() == k,
          "loglik: parameter dimensions do not match the data");
  const Chol e = factor_or_throw(p.sigma_e, "Sigma_e");
  const Matrix e_inv = chol_inverse(e);
  double ll = 0.0;
  for (const auto& c : s.clusters) {
    const Chol a = factor_or_throw(p.sigma_e + c.m * p.sigma_phi, "Sigma_e + m Sigma_phi");
    const Vector r = c.mean - p.gamma_tilde - c.x * p.beta;
    const double quad = c.m * r.dot(chol_solve(a, r));
    const double trace = e_inv.cwiseProduct(c.scatter).sum();
    ll -= 0.5 * (c.m * k * kLog2Pi + (c.m - 1) * e.logdet + a.logdet + trace + quad);
  }
  return ll;
}

ClusterPrecision cluster_precision(const Matrix& sigma_phi, const Matrix& sigma_e, int m) {
  require(m >= 1, "cluster_precision: m must be >= 1");
  const Matrix e_inv = chol_inverse(factor_or_throw(sigma_e, "Sigma_e"));
  const Matrix a_inv = chol_inverse(factor_or_throw(sigma_e + m * sigma_phi, "Sigma_e + m Sigma_phi"));
  return {e_inv, symmetrize((a_inv - e_inv) / m)};
}

double loglik(const MlmmParams& params, const TrialDataset& data) {
  return loglik(params, summarize(data));
}

MlmmParams initial_params(const DataSummary& s) {
  const int k = s.k;
  const int n = static_cast<int>(s.clusters.size());
  Matrix within = Matrix::Zero(k, k);
  for (const auto& c : s.clusters) within += c.scatter;
  const int within_df = s.n_subjects - n;

  Vector arm_mean[2] = {Vector::Zero(k), Vector::Zero(k)};
  int arm_count[2] = {0, 0};
  for (const auto& c : s.clusters) {
    const int arm = c.x > 0 ? 1 : 0;
    arm_mean[arm] += c.mean;
    ++arm_count[arm];
  }
  for (int a = 0; a < 2; ++a)
    if (arm_count[a] > 0) arm_mean[a] /= arm_count[a];
  Matrix between = Matrix::Zero(k, k);
  for (const auto& c : s.clusters) {
    const Vector d = c.mean - arm_mean[c.x > 0 ? 1 : 0];
    between += d * d.transpose();
  }
  const int groups = (arm_count[0] > 0) + (arm_count[1] > 0);
  between /= std::max(1, n - groups);

  MlmmParams p;
  const double m_bar = static_cast<double>(s.n_subjects) / n;
  if (within_df > 0) {
    p.sigma_e = floor_eigenvalues(within / within_df, 1e-8);
    p.sigma_phi = floor_eigenvalues(between - p.sigma_e / m_bar, 1e-8);
  } else {
    // Every cluster has one subject: split the total covariance evenly.
    p.sigma_e = floor_eigenvalues(0.5 * between, 1e-8);
    p.sigma_phi = p.sigma_e;
  }
  const Vector theta = gls_theta(s, p.sigma_phi, p.sigma_e);
  p.gamma_tilde = theta.head(k);
  p.beta = theta.tail(k);
  return p;
}

FitResult em_fit(const TrialDataset& data, const EmOptions& options) {
  require(data.n_clusters() >= 2, "em_fit needs at least two clusters");
  require(options.tol > 0.0 && options.max_iter >= 1, "em_fit: invalid tolerance settings");
  const DataSummary s = summarize(data);
  const int k = s.k;
  const int n = static_cast<int>(s.clusters.size());

  FitResult fit;
  fit.n_clusters = n;
  fit.z_bar = s.z_bar;
  fit.se_theta = Vector::Constant(2 * k, kNaN);
  fit.se_beta = Vector::Constant(k, kNaN);
  fit.wald = Vector::Constant(k, kNaN);
  fit.se_sigma_phi = Vector::Constant(vech_size(k), kNaN);
  fit.se_sigma_e = Vector::Constant(vech_size(k), kNaN);
  fit.cov_theta = Matrix::Constant(2 * k, 2 * k, kNaN);

  if (s.z_bar == 0.0 || s.z_bar == 1.0) {
    fit.status = FitStatus::DegenerateData;
    fit.message = "only one arm is present; the treatment effect is not identifiable";
    fit.theta_hat = Vector::Constant(2 * k, kNaN);
    fit.sigma_phi_hat = Matrix::Constant(k, k, kNaN);
    fit.sigma_e_hat = Matrix::Constant(k, k, kNaN);
    fit.loglik = kNaN;
    return fit;
  }
  bool all_singletons = true;
  for (const auto& c : s.clusters) all_singletons = all_singletons && c.m == 1;

  MlmmParams p = options.init ? *options.init : initial_params(s);
  double ll = loglik(p, s);
  if (options.keep_trace) fit.loglik_trace.push_back(ll);

  const double n_total = s.n_subjects;
  bool converged = false;
  int iter = 0;
  while (iter < options.max_iter) {
    ++iter;
    // E-step at the current parameters, M-step for the variance components.
    Matrix phi_acc = Matrix::Zero(k, k);
    Matrix e_acc = Matrix::Zero(k, k);
    for (const auto& c : s.clusters) {
      const Chol a = factor_or_throw(p.sigma_e + c.m * p.sigma_phi, "Sigma_e + m Sigma_phi");
      // gain = m Sigma_phi A^{-1}; A is symmetric so A^{-1} Sigma_phi = (Sigma_phi A^{-1})^T.
      const Matrix y = a.l.triangularView<Eigen::Lower>().solve(p.sigma_phi);
      const Matrix ainv_phi = a.l.transpose().triangularView<Eigen::Upper>().solve(y);
      const Matrix gain = c.m * ainv_phi.transpose();
      const Vector r = c.mean - p.gamma_tilde - c.x * p.beta;
      const Vector phi_hat = gain * r;
      const Matrix post_cov = symmetrize(p.sigma_phi - gain * p.sigma_phi);
      phi_acc += phi_hat * phi_hat.transpose() + post_cov;
      const Vector d = r - phi_hat;
      e_acc += c.scatter + c.m * (d * d.transpose() + post_cov);
    }
    p.sigma_phi = symmetrize(phi_acc / n);
    p.sigma_e = symmetrize(e_acc / n_total);

    // Conditional maximization of theta at the new variance components.
    const Vector theta = gls_theta(s, p.sigma_phi, p.sigma_e);
    p.gamma_tilde = theta.head(k);
    p.beta = theta.tail(k);

    const double ll_new = loglik(p, s);
    if (options.keep_trace) fit.loglik_trace.push_back(ll_new);
    const double change = std::abs(ll_new - ll) / std::max(1.0, std::abs(ll));
    ll = ll_new;
    if (change < options.tol) {
      converged = true;
      break;
    }
  }

  fit.theta_hat.resize(2 * k);
  fit.theta_hat << p.gamma_tilde, p.beta;
  fit.sigma_phi_hat = p.sigma_phi;
  fit.sigma_e_hat = p.sigma_e;
  fit.loglik = ll;
  fit.iterations = iter;
  fit.converged = converged;
  fit.status = converged ? FitStatus::Converged : FitStatus::NotConverged;
  if (!converged) fit.message = "EM reached max_iter without meeting the tolerance";
  if (all_singletons) {
    fit.status = FitStatus::DegenerateData;
    fit.message = "every cluster has one subject; Sigma_phi and Sigma_e are not separately identifiable";
  }

  if (options.compute_se && converged) {
    try {
      const StandardErrors se = standard_errors(p, s);
      fit.se_theta = se.theta;
      fit.se_beta = se.theta.tail(k);
      fit.cov_theta = se.cov_theta;
      fit.se_sigma_phi = se.sigma_phi;
      fit.se_sigma_e = se.sigma_e;
      fit.wald = fit.beta().cwiseQuotient(fit.se_beta);
      fit.se_available = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SingularInformation) throw;
      // Typically Sigma_phi on the boundary.  Fall back to the theta block
      // with the variance components held at their estimates.
      Matrix info;
      Vector unused;
      gls_system(s, p.sigma_phi, p.sigma_e, info, unused);
      Eigen::LLT<Matrix> llt(info);
      if (llt.info() == Eigen::Success) {
        fit.cov_theta = symmetrize(llt.solve(Matrix::Identity(2 * k, 2 * k)));
        fit.se_theta = fit.cov_theta.diagonal().cwiseSqrt();
        fit.se_beta = fit.se_theta.tail(k);
        fit.wald = fit.beta().cwiseQuotient(fit.se_beta);
        fit.se_available = true;
        fit.se_theta_only = true;
      }
      fit.message = e.what();
    }
  }
  return fit;
}

StandardErrors standard_errors(const MlmmParams& params, const DataSummary& s) {
  const Packing pk{s.k};
  const Vector p0 = pk.pack(params);
  const int np = pk.size();
  auto f = [&](const Vector& v) { return loglik(pk.unpack(v), s); };

  Vector h(np);
  for (int i = 0; i < np; ++i) h[i] = 1e-4 * std::max(1.0, std::abs(p0[i]));

  const double f0 = f(p0);
  Matrix hess(np, np);
  for (int i = 0; i < np; ++i) {
    Vector v = p0;
    v[i] = p0[i] + h[i];
    const double fp = f(v);
    v[i] = p0[i] - h[i];
    const double fm = f(v);
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (int j = 0; j < i; ++j) {
      auto at = [&](double si, double sj) {
        Vector w = p0;
        w[i] += si * h[i];
        w[j] += sj * h[j];
        return f(w);
      };
      const double val = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[i] * h[j]);
      hess(i, j) = val;
      hess(j, i) = val;
    }
  }

  const Matrix info = -hess;
  Eigen::LLT<Matrix> llt(info);
  if (llt.info() != Eigen::Success || !info.allFinite()) {
    throw Error(ErrorCode::SingularInformation, "observed information is not positive definite");
  }
  const Matrix cov = llt.solve(Matrix::Identity(np, np));
  if (!(cov.diagonal().array() > 0.0).all()) {
    throw Error(ErrorCode::SingularInformation, "observed information is ill-conditioned");
  }

  const int k = s.k;
  StandardErrors out;
  out.hessian = hess;
  out.cov_theta = symmetrize(cov.topLeftCorner(2 * k, 2 * k));
  out.theta = out.cov_theta.diagonal().cwiseSqrt();

  // Delta method for vech(Sigma_phi), vech(Sigma_e).
  const int nv = vech_size(k);
  Matrix jac = Matrix::Zero(2 * nv, np);
  for (int i = 2 * k; i < np; ++i) {
    const double step = 1e-6 * std::max(1.0, std::abs(p0[i]));
    Vector v = p0;
    v[i] += step;
    const MlmmParams up = pk.unpack(v);
    v[i] = p0[i] - step;
    const MlmmParams dn = pk.unpack(v);
    jac.col(i).head(nv) = (vech(up.sigma_phi) - vech(dn.sigma_phi)) / (2.0 * step);
    jac.col(i).tail(nv) = (vech(up.sigma_e) - vech(dn.sigma_e)) / (2.0 * step);
  }
  const Matrix cov_vc = jac * cov * jac.transpose();
  const Vector se_vc = cov_vc.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.sigma_phi = se_vc.head(nv);
  out.sigma_e = se_vc.tail(nv);
  return out;
}

StandardErrors standard_errors(const FitResult& fit, const TrialDataset& data) {
  require(fit.converged, "standard_errors needs a converged fit");
  return standard_errors(fit.params(), summarize(data));
}

IuDecision wald_iu_decision(const FitResult& fit, double alpha) {
  const int k = static_cast<int>(fit.theta_hat.size() / 2);
  const int df = fit.n_clusters - 2 * k;
  if (df < 1) throw Error(ErrorCode::InsufficientDf, "n - 2K must be >= 1");
  if (!fit.se_available) {
    throw Error(ErrorCode::SingularInformation, "fit has no standard errors");
  }
  IuDecision d;
  d.zeta = fit.wald;
  d.critical = student_t_quantile(1.0 - alpha, df);
  d.endpoint_reject.resize(k);
  d.reject = true;
  for (int i = 0; i < k; ++i) {
    d.endpoint_reject[i] = d.zeta[i] > d.critical;
    d.reject = d.reject && d.endpoint_reject[i];
  }
  return d;
}

GlhDecision wald_glh_decision(const FitResult& fit, const TestSpec& test, double alpha) {
  const int k = static_cast<int>(fit.theta_hat.size() / 2);
  require(test.is_glh(), "wald_glh_decision needs a GLH test");
  const Matrix l = test.contrast_matrix(k);
  const int s = static_cast<int>(l.rows());
  const int df = fit.n_clusters - s - k;
  if (df < 1) throw Error(ErrorCode::InsufficientDf, "n - S - K must be >= 1");
  if (!fit.se_available) {
    throw Error(ErrorCode::SingularInformation, "fit has no standard errors");
  }
  const Matrix cov_beta = fit.cov_theta.bottomRightCorner(k, k);
  const Vector lb = l * fit.beta();
  const SpdMatrix middle(symmetrize(l * cov_beta * l.transpose()));
  GlhDecision d;
  d.f_stat = lb.dot(solve_spd(middle, lb).col(0)) / s;
  d.df_num = s;
  d.df_den = df;
  d.critical = central_f_quantile(1.0 - alpha, s, df);
  d.reject = d.f_stat > d.critical;
  return d;
}

}  // namespace cocrt
