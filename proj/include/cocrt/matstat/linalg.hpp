#pragma once

#include <Eigen/Dense>

namespace cocrt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Co-primary endpoint counts are small; every K x K routine assumes this bound.
inline constexpr int kMaxEndpoints = 16;

/// A symmetric positive-definite matrix with its lower Cholesky factor cached.
///
/// Construction validates symmetry (relative tolerance 1e-12) and that the
/// Cholesky factorization succeeds; otherwise it throws
/// Error(NotPositiveDefinite).
class SpdMatrix {
 public:
  explicit SpdMatrix(Matrix a);

  Eigen::Index dim() const { return a_.rows(); }
  const Matrix& matrix() const { return a_; }
  const Matrix& lower() const { return l_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return a_(i, j); }

 private:
  Matrix a_;
  Matrix l_;
};

/// Lower-triangular L with L * L^T = a.
Matrix cholesky(const SpdMatrix& a);

/// x with a * x = b, refined once against a long-double residual.
Matrix solve_spd(const SpdMatrix& a, const Matrix& b);

SpdMatrix invert_spd(const SpdMatrix& a);

/// (a + a^T) / 2
Matrix symmetrize(const Matrix& a);

double min_eigenvalue(const Matrix& a);

/// True when a is symmetric and its smallest eigenvalue exceeds tol times
/// max(1, largest absolute eigenvalue).
bool is_positive_definite(const Matrix& a, double tol = 1e-10);

/// Any F with F * F^T = a for a symmetric positive semi-definite a.  Uses the
/// Cholesky factor when it exists and a clamped eigen square root otherwise,
/// so singular covariances (e.g. a zero random-intercept matrix) are allowed.
Matrix psd_factor(const Matrix& a);

/// Infinity norm (max absolute row sum).
double inf_norm(const Matrix& a);

}  // namespace cocrt
