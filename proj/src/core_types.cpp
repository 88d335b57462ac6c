#include "cocrt/core_types.hpp"

#include <cmath>
#include <string>

#include "cocrt/error.hpp"

namespace cocrt {

namespace {

constexpr double kEigenTol = 1e-10;

double eigen_scale(const Matrix& a) { return std::max(1.0, a.cwiseAbs().maxCoeff()); }

bool symmetric(const Matrix& a, double tol = 1e-12) {
  return a.rows() == a.cols() && (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * eigen_scale(a);
}

void check_components(const Matrix& sigma_phi, const Matrix& sigma_e) {
  require(sigma_phi.rows() >= 1 && sigma_phi.rows() <= kMaxEndpoints,
          "endpoint count must be in [1, 16]");
  require(sigma_phi.rows() == sigma_phi.cols() && sigma_e.rows() == sigma_phi.rows() &&
              sigma_e.cols() == sigma_phi.rows(),
          "sigma_phi and sigma_e must both be K x K");
  require(sigma_phi.allFinite() && sigma_e.allFinite(), "variance components must be finite");
  require(symmetric(sigma_phi), "sigma_phi is not symmetric", ErrorCode::NotPositiveDefinite);
  require(symmetric(sigma_e), "sigma_e is not symmetric", ErrorCode::NotPositiveDefinite);
  const double phi_min = min_eigenvalue(sigma_phi);
  const double e_min = min_eigenvalue(sigma_e);
  if (phi_min < -kEigenTol * eigen_scale(sigma_phi)) {
    throw Error(ErrorCode::NotPositiveDefinite,
                "sigma_phi has negative eigenvalue " + std::to_string(phi_min));
  }
  if (e_min <= kEigenTol * eigen_scale(sigma_e)) {
    throw Error(ErrorCode::NotPositiveDefinite,
                "sigma_e has non-positive eigenvalue " + std::to_string(e_min));
  }
}

Matrix components_from_icc(const Vector& rho0, const Matrix& rho1, const Matrix& rho2,
                           const Vector& sigma_y2, bool between) {
  const auto k = rho0.size();
  Matrix out(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      const double scale = std::sqrt(sigma_y2[a] * sigma_y2[b]);
      if (a == b) {
        out(a, a) = (between ? rho0[a] : 1.0 - rho0[a]) * sigma_y2[a];
      } else {
        out(a, b) = (between ? rho1(a, b) : rho2(a, b) - rho1(a, b)) * scale;
      }
    }
  }
  return out;
}

}  // namespace

IccSet::IccSet(Vector rho0, Matrix rho1, Matrix rho2, Vector sigma_y2)
    : rho0_(std::move(rho0)),
      rho1_(std::move(rho1)),
      rho2_(std::move(rho2)),
      sigma_y2_(std::move(sigma_y2)) {
  const auto k = rho0_.size();
  require(k >= 1 && k <= kMaxEndpoints, "endpoint count must be in [1, 16]");
  require(rho1_.rows() == k && rho1_.cols() == k && rho2_.rows() == k && rho2_.cols() == k &&
              sigma_y2_.size() == k,
          "ICC arrays must agree on K");
  require(rho0_.allFinite() && rho1_.allFinite() && rho2_.allFinite() && sigma_y2_.allFinite(),
          "ICC entries must be finite");
  for (Eigen::Index a = 0; a < k; ++a) {
    require(rho0_[a] >= 0.0 && rho0_[a] < 1.0, "rho0 entries must lie in [0, 1)");
    require(sigma_y2_[a] > 0.0, "sigma_y2 entries must be positive");
    require(std::abs(rho1_(a, a) - rho0_[a]) <= 1e-12, "rho1 diagonal must equal rho0");
    require(std::abs(rho2_(a, a) - 1.0) <= 1e-12, "rho2 diagonal must equal 1");
    for (Eigen::Index b = 0; b < k; ++b) {
      require(std::abs(rho1_(a, b) - rho1_(b, a)) <= 1e-12, "rho1 must be symmetric");
      require(std::abs(rho2_(a, b) - rho2_(b, a)) <= 1e-12, "rho2 must be symmetric");
      require(std::abs(rho1_(a, b)) <= 1.0 && std::abs(rho2_(a, b)) <= 1.0,
              "ICC entries must satisfy |rho| <= 1");
    }
  }
  check_components(components_from_icc(rho0_, rho1_, rho2_, sigma_y2_, true),
                   components_from_icc(rho0_, rho1_, rho2_, sigma_y2_, false));
}

VarianceComponents::VarianceComponents(Matrix sigma_phi, Matrix sigma_e)
    : sigma_phi_(std::move(sigma_phi)), sigma_e_(std::move(sigma_e)) {
  check_components(sigma_phi_, sigma_e_);
  sigma_phi_ = symmetrize(sigma_phi_);
  sigma_e_ = symmetrize(sigma_e_);
}

void DesignSpec::validate() const {
  require(n >= 2, "design: n must be >= 2");
  require(m_bar >= 1.0, "design: m_bar must be >= 1");
  require(cv >= 0.0 && std::isfinite(cv), "design: cv must be >= 0");
  require(z_bar > 0.0 && z_bar < 1.0, "design: z_bar must lie in (0, 1)");
  require(alpha > 0.0 && alpha < 1.0, "design: alpha must lie in (0, 1)");
}

const char* to_string(TestKind kind) {
  switch (kind) {
    case TestKind::Omnibus: return "omnibus";
    case TestKind::Homogeneity: return "homogeneity";
    case TestKind::CustomGLH: return "custom";
    case TestKind::IntersectionUnion: return "iu";
  }
  return "unknown";
}

TestKind parse_test_kind(const std::string& name) {
  if (name == "omnibus") return TestKind::Omnibus;
  if (name == "homogeneity") return TestKind::Homogeneity;
  if (name == "custom") return TestKind::CustomGLH;
  if (name == "iu" || name == "intersection-union") return TestKind::IntersectionUnion;
  throw Error(ErrorCode::InvalidArgument, "unknown test kind '" + name + "'");
}

Matrix successive_differences(int k) {
  require(k >= 2, "homogeneity test needs at least two endpoints");
  Matrix l = Matrix::Zero(k - 1, k);
  for (int s = 0; s < k - 1; ++s) {
    l(s, s) = 1.0;
    l(s, s + 1) = -1.0;
  }
  return l;
}

Matrix TestSpec::contrast_matrix(int k) const {
  switch (kind) {
    case TestKind::Omnibus: return Matrix::Identity(k, k);
    case TestKind::Homogeneity: return successive_differences(k);
    case TestKind::CustomGLH:
      require(contrast.has_value(), "custom test requires a contrast matrix");
      return *contrast;
    case TestKind::IntersectionUnion: break;
  }
  throw Error(ErrorCode::InvalidArgument, "intersection-union test has no contrast matrix");
}

Vector TestSpec::alternative(int k) const {
  if (delta) return *delta;
  require(beta.has_value(), "GLH test needs either delta or beta");
  require(beta->size() == k, "beta must have K entries");
  return contrast_matrix(k) * *beta;
}

void TestSpec::validate(int k) const {
  if (beta) {
    require(beta->size() == k && beta->allFinite(), "beta must have K finite entries");
  }
  if (kind == TestKind::IntersectionUnion) {
    require(beta.has_value(), "intersection-union test requires beta");
    return;
  }
  const Matrix l = contrast_matrix(k);
  require(l.cols() == k, "contrast matrix must have K columns");
  require(l.rows() >= 1 && l.rows() <= k, "contrast matrix must have 1..K rows");
  Eigen::FullPivLU<Matrix> lu(l);
  require(lu.rank() == l.rows(), "contrast rows must be linearly independent");
  const Vector d = alternative(k);
  require(d.size() == l.rows() && d.allFinite(), "delta must have S finite entries");
}

VarianceComponents icc_to_components(const IccSet& icc) {
  return VarianceComponents(
      components_from_icc(icc.rho0(), icc.rho1(), icc.rho2(), icc.sigma_y2(), true),
      components_from_icc(icc.rho0(), icc.rho1(), icc.rho2(), icc.sigma_y2(), false));
}

IccSet components_to_icc(const VarianceComponents& vc) {
  const int k = vc.k();
  const Vector sy2 = vc.sigma_y2();
  Vector rho0(k);
  Matrix rho1(k, k);
  Matrix rho2(k, k);
  for (int a = 0; a < k; ++a) {
    rho0[a] = vc.sigma_phi()(a, a) / sy2[a];
    for (int b = 0; b < k; ++b) {
      const double scale = std::sqrt(sy2[a] * sy2[b]);
      if (a == b) {
        rho1(a, a) = rho0[a];
        rho2(a, a) = 1.0;
      } else {
        rho1(a, b) = vc.sigma_phi()(a, b) / scale;
        rho2(a, b) = (vc.sigma_phi()(a, b) + vc.sigma_e()(a, b)) / scale;
      }
    }
  }
  return IccSet(rho0, rho1, rho2, sy2);
}

IccSet bex_expand(const Vector& rho0, double rho1, double rho2, const Vector& sigma_y2) {
  const auto k = rho0.size();
  require(k == sigma_y2.size(), "bex_expand: rho0 and sigma_y2 lengths differ");
  Matrix r1 = Matrix::Constant(k, k, rho1);
  Matrix r2 = Matrix::Constant(k, k, rho2);
  r1.diagonal() = rho0;
  r2.diagonal().setOnes();
  return IccSet(rho0, r1, r2, sigma_y2);
}

IccSet bex_expand(double rho0, double rho1, double rho2, const Vector& sigma_y2) {
  return bex_expand(Vector::Constant(sigma_y2.size(), rho0), rho1, rho2, sigma_y2);
}

Vector sequence_rho0(double kappa, double upper, int k) {
  require(k >= 1, "sequence_rho0: k must be >= 1");
  require(kappa > 0.0 && kappa <= upper && upper < 1.0,
          "sequence_rho0: need 0 < kappa <= upper < 1");
  if (k == 1) return Vector::Constant(1, kappa);
  return Vector::LinSpaced(k, kappa, upper);
}

}  // namespace cocrt
