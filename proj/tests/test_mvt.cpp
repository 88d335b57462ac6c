#include <doctest.h>

#include <random>
#include <vector>

#include "cocrt/error.hpp"
#include "cocrt/matstat/mvt.hpp"
#include "oracles.hpp"

using namespace cocrt;

namespace {

MvtOptions opts(MvtKind kind) {
  MvtOptions o;
  o.kind = kind;
  return o;
}

double rect(const Vector& lower, const Vector& loc, const Matrix& corr, double df, MvtKind kind,
            MvtResult* out = nullptr) {
  const MvtResult r = mvt_rectangle(std::span(lower.data(), lower.size()),
                                    std::span(loc.data(), loc.size()), SpdMatrix(corr), df, opts(kind));
  if (out) *out = r;
  return r.probability;
}

}  // namespace

TEST_CASE("one dimension reduces to the univariate tail") {
  const Matrix one = Matrix::Ones(1, 1);
  for (double df : {3.0, 14.0, kInfiniteDf}) {
    for (double c : {-1.0, 0.0, 1.7}) {
      const Vector lo = Vector::Constant(1, c);
      const double shifted = rect(lo, Vector::Constant(1, 0.5), one, df, MvtKind::Shifted);
      CHECK(std::abs(shifted - student_t_sf(c - 0.5, df)) < 1e-6);
      const double central = rect(lo, Vector::Zero(1), one, df, MvtKind::Noncentral);
      CHECK(std::abs(central - student_t_sf(c, df)) < 1e-6);
    }
  }
}

TEST_CASE("one dimension noncentral t agrees with monte carlo") {
  const Vector lo = Vector::Constant(1, 1.8);
  const Vector loc = Vector::Constant(1, 2.5);
  const double v = rect(lo, loc, Matrix::Ones(1, 1), 12.0, MvtKind::Noncentral);
  const auto mc = oracle::mc_mvt(lo, loc, Matrix::Ones(1, 1), 12.0, MvtKind::Noncentral, 2'000'000, 8);
  CHECK(std::abs(v - mc.p) < 3.0 * mc.se + 1e-6);
}

TEST_CASE("independent coordinates factorize under the normal") {
  for (int k : {2, 3, 4}) {
    Vector lo(k), loc(k);
    for (int i = 0; i < k; ++i) {
      lo[i] = 1.6 + 0.1 * i;
      loc[i] = 0.5 * i;
    }
    MvtResult r;
    const double p = rect(lo, loc, Matrix::Identity(k, k), kInfiniteDf, MvtKind::Shifted, &r);
    double prod = 1.0;
    for (int i = 0; i < k; ++i) prod *= normal_sf(lo[i] - loc[i]);
    CHECK(std::abs(p - prod) <= r.mc_error + 1e-12);
    CHECK(r.mc_error < 5e-4);
  }
}

TEST_CASE("equicorrelated trivariate t against monte carlo") {
  Matrix corr = Matrix::Constant(3, 3, 0.5);
  corr.diagonal().setOnes();
  MvtResult r;
  const double p = rect(Vector::Zero(3), Vector::Zero(3), corr, 20.0, MvtKind::Shifted, &r);
  const auto mc = oracle::mc_mvt(Vector::Zero(3), Vector::Zero(3), corr, 20.0, MvtKind::Shifted,
                                 10'000'000, 77);
  CHECK(std::abs(p - mc.p) < r.mc_error + 3.0 * mc.se);
  // Orthant probability of an equicorrelated (0.5) trivariate t is 1/4 for any df.
  CHECK(std::abs(p - 0.25) < r.mc_error);
}

TEST_CASE("bivariate normal orthant closed form") {
  for (double rho : {-0.7, -0.2, 0.0, 0.4, 0.9}) {
    Matrix corr(2, 2);
    corr << 1, rho, rho, 1;
    MvtResult r;
    const double p = rect(Vector::Zero(2), Vector::Zero(2), corr, kInfiniteDf, MvtKind::Shifted, &r);
    // mc_error is a 3-sigma estimate from 8 replicates, itself uncertain.
    CHECK(std::abs(p - (0.25 + std::asin(rho) / (2.0 * std::numbers::pi))) < 1.5 * r.mc_error + 1e-12);
  }
}

TEST_CASE("shift invariance of the shifted form") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 5; ++t) {
    const int k = 2 + t % 3;
    const Matrix corr = oracle::random_correlation(k, rng);
    const Vector lo = Vector::Random(k);
    const Vector mu = Vector::Random(k) * 2.0;
    const double a = rect(lo, mu, corr, 15.0, MvtKind::Shifted);
    const double b = rect(lo - mu, Vector::Zero(k), corr, 15.0, MvtKind::Shifted);
    CHECK(a == b);
  }
}

TEST_CASE("forms coincide for the normal and differ for finite df") {
  Matrix corr(2, 2);
  corr << 1, 0.3, 0.3, 1;
  const Vector lo = Vector::Constant(2, 1.75);
  const Vector mu = Vector::Constant(2, 3.0);
  CHECK(rect(lo, mu, corr, kInfiniteDf, MvtKind::Shifted) ==
        rect(lo, mu, corr, kInfiniteDf, MvtKind::Noncentral));
  CHECK(std::abs(rect(lo, mu, corr, 10.0, MvtKind::Shifted) -
                 rect(lo, mu, corr, 10.0, MvtKind::Noncentral)) > 5e-3);
}

TEST_CASE("random cases against monte carlo, both forms") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  for (int t = 0; t < 6; ++t) {
    const int k = 2 + t % 3;
    const Matrix corr = oracle::random_correlation(k, rng);
    Vector lo(k), mu(k);
    for (int i = 0; i < k; ++i) {
      lo[i] = u(rng);
      mu[i] = u(rng) + 1.0;
    }
    const double df = 5.0 + 7 * t;
    const MvtKind kind = t % 2 ? MvtKind::Noncentral : MvtKind::Shifted;
    MvtResult r;
    const double p = rect(lo, mu, corr, df, kind, &r);
    const auto mc = oracle::mc_mvt(lo, mu, corr, df, kind, 2'000'000, 1000 + t);
    CHECK(std::abs(p - mc.p) < r.mc_error + 3.0 * mc.se);
  }
}

TEST_CASE("deterministic for a fixed seed and monotone in the limits") {
  Matrix corr(3, 3);
  corr << 1, 0.2, 0.1, 0.2, 1, 0.4, 0.1, 0.4, 1;
  const Vector mu = Vector::Constant(3, 2.0);
  const double a = rect(Vector::Constant(3, 1.7), mu, corr, 18.0, MvtKind::Noncentral);
  CHECK(a == rect(Vector::Constant(3, 1.7), mu, corr, 18.0, MvtKind::Noncentral));
  double prev = 1.0;
  for (double c = -1.0; c <= 3.0; c += 0.5) {
    const double p = rect(Vector::Constant(3, c), mu, corr, 18.0, MvtKind::Noncentral);
    CHECK(p <= prev + 1e-12);
    prev = p;
  }
}

TEST_CASE("the point cap is reported") {
  Matrix corr = Matrix::Constant(4, 4, 0.3);
  corr.diagonal().setOnes();
  const Vector lo = Vector::Zero(4);
  const Vector mu = Vector::Zero(4);
  MvtOptions o;
  o.abs_tol = 1e-9;
  o.max_total_points = 1 << 14;
  CHECK_THROWS_AS(mvt_rectangle(std::span(lo.data(), 4), std::span(mu.data(), 4), SpdMatrix(corr), 9.0, o),
                  Error);
  o.throw_on_cap = false;
  const auto r = mvt_rectangle(std::span(lo.data(), 4), std::span(mu.data(), 4), SpdMatrix(corr), 9.0, o);
  CHECK_FALSE(r.accuracy_reached);
  CHECK(r.points <= o.max_total_points);
}

TEST_CASE("input validation") {
  Matrix not_corr(2, 2);
  not_corr << 2, 0.1, 0.1, 1;
  const Vector lo = Vector::Zero(2);
  CHECK_THROWS_AS(mvt_rectangle(std::span(lo.data(), 2), std::span(lo.data(), 2), SpdMatrix(not_corr), 5.0),
                  Error);
  CHECK_THROWS_AS(mvt_rectangle(std::span(lo.data(), 2), std::span(lo.data(), 1), SpdMatrix(Matrix::Identity(2, 2)), 5.0),
                  Error);
  CHECK_THROWS_AS(mvt_rectangle(std::span(lo.data(), 2), std::span(lo.data(), 2), SpdMatrix(Matrix::Identity(2, 2)), 0.0),
                  Error);
}
