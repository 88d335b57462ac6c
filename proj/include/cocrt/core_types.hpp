#pragma once

#include <optional>
#include <vector>

#include "cocrt/matstat/linalg.hpp"

namespace cocrt {

/// Intraclass correlations and marginal variances of K co-primary endpoints.
///
///  rho0[k]      corr(y_ijk, y_ij'k)    endpoint-specific ICC
///  rho1(k, k')  corr(y_ijk, y_ij'k')   inter-subject between-endpoint ICC
///  rho2(k, k')  corr(y_ijk, y_ijk')    intra-subject ICC
///
/// with rho1(k, k) = rho0[k] and rho2(k, k) = 1.  Construction validates every
/// invariant, including positive definiteness of the implied variance
/// components.
class IccSet {
 public:
  IccSet(Vector rho0, Matrix rho1, Matrix rho2, Vector sigma_y2);

  int k() const { return static_cast<int>(rho0_.size()); }
  const Vector& rho0() const { return rho0_; }
  const Matrix& rho1() const { return rho1_; }
  const Matrix& rho2() const { return rho2_; }
  const Vector& sigma_y2() const { return sigma_y2_; }

 private:
  Vector rho0_;
  Matrix rho1_;
  Matrix rho2_;
  Vector sigma_y2_;
};

/// Between-cluster (sigma_phi) and residual (sigma_e) covariance matrices.
class VarianceComponents {
 public:
  VarianceComponents(Matrix sigma_phi, Matrix sigma_e);

  int k() const { return static_cast<int>(sigma_phi_.rows()); }
  const Matrix& sigma_phi() const { return sigma_phi_; }
  const Matrix& sigma_e() const { return sigma_e_; }
  Vector sigma_y2() const { return sigma_phi_.diagonal() + sigma_e_.diagonal(); }

 private:
  Matrix sigma_phi_;
  Matrix sigma_e_;
};

struct DesignSpec {
  int n = 0;
  double m_bar = 0.0;
  double cv = 0.0;
  double z_bar = 0.5;
  double alpha = 0.05;

  /// Variance of the Bernoulli cluster-level allocation, z_bar * (1 - z_bar).
  double sigma_z2() const { return z_bar * (1.0 - z_bar); }
  void validate() const;
};

enum class TestKind { Omnibus, Homogeneity, CustomGLH, IntersectionUnion };

const char* to_string(TestKind kind);
TestKind parse_test_kind(const std::string& name);

struct TestSpec {
  TestKind kind = TestKind::Omnibus;
  std::optional<Matrix> contrast;  // CustomGLH only
  std::optional<Vector> delta;     // GLH kinds; defaults to L * beta
  std::optional<Vector> beta;      // effects, required for IntersectionUnion

  bool is_glh() const { return kind != TestKind::IntersectionUnion; }

  /// The effective S x K contrast: I_K, successive differences, or the custom L.
  Matrix contrast_matrix(int k) const;

  /// delta if given, otherwise L * beta.
  Vector alternative(int k) const;

  void validate(int k) const;
};

struct EffectModel {
  Vector gamma;
  Vector beta;
};

/// Maps ICCs to variance components; throws Error(NotPositiveDefinite) when
/// either implied matrix has an eigenvalue <= 1e-10.
VarianceComponents icc_to_components(const IccSet& icc);

IccSet components_to_icc(const VarianceComponents& vc);

/// Block-exchangeable ICC set: the same rho0, rho1, rho2 for every endpoint pair.
IccSet bex_expand(double rho0, double rho1, double rho2, const Vector& sigma_y2);

/// Like bex_expand but with endpoint-specific rho0.
IccSet bex_expand(const Vector& rho0, double rho1, double rho2, const Vector& sigma_y2);

/// K equally spaced values from kappa to upper inclusive.
Vector sequence_rho0(double kappa, double upper, int k);

/// Successive-difference contrasts (e_1 - e_2, ..., e_{K-1} - e_K)^T.
Matrix successive_differences(int k);

}  // namespace cocrt
