#include "cocrt/matstat/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cocrt/error.hpp"

namespace cocrt {

namespace {

bool is_symmetric(const Matrix& a, double rel_tol) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

}  // namespace

SpdMatrix::SpdMatrix(Matrix a) : a_(std::move(a)) {
  require(a_.rows() == a_.cols() && a_.rows() >= 1, "SpdMatrix must be square and non-empty");
  require(a_.allFinite(), "SpdMatrix has non-finite entries", ErrorCode::NotPositiveDefinite);
  require(is_symmetric(a_, 1e-12), "matrix is not symmetric", ErrorCode::NotPositiveDefinite);
  a_ = symmetrize(a_);
  Eigen::LLT<Matrix> llt(a_);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NotPositiveDefinite, "Cholesky factorization failed");
  }
  l_ = llt.matrixL();
  for (Eigen::Index i = 0; i < l_.rows(); ++i) {
    if (!(l_(i, i) > 0.0)) {
      throw Error(ErrorCode::NotPositiveDefinite,
                  "non-positive pivot at index " + std::to_string(i));
    }
  }
}

Matrix cholesky(const SpdMatrix& a) { return a.lower(); }

Matrix solve_spd(const SpdMatrix& a, const Matrix& b) {
  require(b.rows() == a.dim(), "solve_spd: dimension mismatch");
  const auto& l = a.lower();
  auto solve = [&](const Matrix& rhs) {
    Matrix y = l.triangularView<Eigen::Lower>().solve(rhs);
    return Matrix(l.transpose().triangularView<Eigen::Upper>().solve(y));
  };
  Matrix x = solve(b);

  // One step of iterative refinement with the residual accumulated in long double.
  using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const LMatrix residual =
      b.cast<long double>() - a.matrix().cast<long double>() * x.cast<long double>();
  x += solve(residual.cast<double>());
  return x;
}

SpdMatrix invert_spd(const SpdMatrix& a) {
  Matrix inv = solve_spd(a, Matrix::Identity(a.dim(), a.dim()));
  return SpdMatrix(symmetrize(inv));
}

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

double min_eigenvalue(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_positive_definite(const Matrix& a, double tol) {
  if (a.rows() != a.cols() || a.rows() == 0 || !a.allFinite()) return false;
  if (!is_symmetric(a, 1e-12)) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  return ev.minCoeff() > tol * scale;
}

Matrix psd_factor(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) {
    Matrix l = llt.matrixL();
    if ((l.diagonal().array() > 0.0).all()) return l;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

double inf_norm(const Matrix& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace cocrt
