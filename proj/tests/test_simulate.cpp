#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cocrt/error.hpp"
#include "cocrt/power.hpp"
#include "cocrt/simulate.hpp"
#include "oracles.hpp"

using namespace cocrt;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(v.size());
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

SimulationScenario row1() {
  const auto vc =
      icc_to_components(bex_expand(sequence_rho0(0.01, 0.1, 2), 0.005, 0.2, vec({1, 2})));
  const Vector beta = vec({0.3, 0.7});
  return SimulationScenario{vc, {Vector::Zero(2), beta}, DesignSpec{16, 60, 0.0, 0.5, 0.05},
                            TestSpec{TestKind::IntersectionUnion, {}, {}, beta}};
}

}  // namespace

TEST_CASE("equal cluster sizes") {
  const auto s = sample_cluster_sizes(60, 0.0, 16, RngStream(1, 0));
  CHECK(std::all_of(s.begin(), s.end(), [](int m) { return m == 60; }));
  CHECK(sample_cluster_sizes(59.6, 0.0, 3, RngStream(1, 0))[0] == 60);
}

TEST_CASE("gamma cluster size moments") {
  const int n = 100'000;
  const auto s = sample_cluster_sizes(60, 0.8, n, RngStream(5, 0));
  double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double ss = 0.0;
  for (int m : s) ss += (m - mean) * (m - mean);
  const double sd = std::sqrt(ss / (n - 1));
  CHECK(std::abs(mean - 60.0) < 4.0 * 48.0 / std::sqrt(double(n)));
  CHECK(std::abs(sd / mean - 0.8) < 0.02);
  CHECK(*std::min_element(s.begin(), s.end()) >= 2);
}

TEST_CASE("balanced allocation") {
  const auto a = allocate_arms(16, 0.5, RngStream(3, 0));
  CHECK(std::count(a.begin(), a.end(), 1) == 8);
  const auto b = allocate_arms(16, 0.5, RngStream(4, 0));
  CHECK(std::count(b.begin(), b.end(), 1) == 8);
  CHECK(a != b);
  const auto c = allocate_arms(20, 0.3, RngStream(1, 1));
  CHECK(std::count(c.begin(), c.end(), 1) == 6);
  try {
    allocate_arms(15, 0.5, RngStream(3, 0));
    FAIL("expected InfeasibleAllocation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfeasibleAllocation);
  }
}

TEST_CASE("independent residuals have identity covariance") {
  const int k = 3;
  const VarianceComponents vc(Matrix::Zero(k, k), Matrix::Identity(k, k));
  const std::vector<int> sizes(1000, 100);
  std::vector<int> arms(1000, 0);
  const auto d = simulate_trial({Vector::Zero(k), Vector::Zero(k)}, vc, sizes, arms, RngStream(8, 0));
  const double n = d.n_subjects();
  const Vector mean = d.y.colwise().mean();
  const Matrix centered = d.y.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / (n - 1);
  // Entrywise SE of a sample covariance of independent unit normals is about 1/sqrt(n)
  // (sqrt(2/n) on the diagonal).
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) {
      const double se = (a == b ? std::sqrt(2.0) : 1.0) / std::sqrt(n);
      CHECK(std::abs(cov(a, b) - (a == b ? 1.0 : 0.0)) < 4.0 * se);
    }
}

TEST_CASE("cluster means and arm difference") {
  Matrix p(2, 2), e(2, 2);
  p << 0.3, 0.1, 0.1, 0.2;
  e << 1.0, 0.4, 0.4, 2.0;
  const VarianceComponents vc(p, e);
  const int n = 4000, m = 5;
  const std::vector<int> sizes(n, m);
  const auto arms = allocate_arms(n, 0.5, RngStream(9, 1));
  const Vector gamma = vec({1.0, -2.0});
  const Vector beta = vec({0.5, 0.25});
  const auto d = simulate_trial({gamma, beta}, vc, sizes, arms, RngStream(9, 2));

  Matrix means = Matrix::Zero(n, 2);
  for (int r = 0; r < d.n_subjects(); ++r) means.row(d.subject_cluster[r]) += d.y.row(r) / m;
  Vector arm_mean[2] = {Vector::Zero(2), Vector::Zero(2)};
  for (int i = 0; i < n; ++i) arm_mean[arms[i]] += means.row(i).transpose() / (n / 2);
  const Matrix target = p + e / m;
  const Vector diff = arm_mean[1] - arm_mean[0];
  for (int k = 0; k < 2; ++k) {
    const double se = std::sqrt(target(k, k) * 4.0 / n);
    CHECK(std::abs(diff[k] - beta[k]) < 4.0 * se);
    CHECK(std::abs(arm_mean[0][k] - gamma[k]) < 4.0 * se);
  }
  Matrix cov = Matrix::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Vector r = means.row(i).transpose() - arm_mean[arms[i]];
    cov += r * r.transpose() / (n - 2);
  }
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double se = std::sqrt((target(a, b) * target(a, b) + target(a, a) * target(b, b)) / n);
      CHECK(std::abs(cov(a, b) - target(a, b)) < 4.0 * se);
    }
}

TEST_CASE("dataset structure") {
  const auto sc = row1();
  const auto sizes = sample_cluster_sizes(10, 0.5, 6, RngStream(1, 0));
  const auto arms = allocate_arms(6, 0.5, RngStream(1, 1));
  const auto d = simulate_trial(sc.effect, sc.vc, sizes, arms, RngStream(1, 2));
  CHECK_NOTHROW(d.validate());
  CHECK(d.n_clusters() == 6);
  CHECK(d.n_subjects() == std::accumulate(sizes.begin(), sizes.end(), 0));
  for (int i = 0; i < 6; ++i) {
    CHECK(d.clusters[i].id == i + 1);
    CHECK(d.clusters[i].arm == arms[i]);
  }
}

TEST_CASE("one replicate yields power 0 or 1") {
  SimulationOptions o;
  o.reps = 1;
  const auto r = empirical_power(row1(), o);
  CHECK(r.replicates == 1);
  CHECK((r.empirical_power == 0.0 || r.empirical_power == 1.0));
  o.reps = 0;
  CHECK_THROWS_AS(empirical_power(row1(), o), Error);
}

TEST_CASE("reports do not depend on the thread count") {
  SimulationOptions o;
  o.reps = 24;
  o.base_seed = 77;
  o.threads = 1;
  const auto a = empirical_power(row1(), o);
  o.threads = 4;
  const auto b = empirical_power(row1(), o);
  CHECK(a.rejections == b.rejections);
  CHECK(a.used == b.used);
  for (int i = 0; i < o.reps; ++i) {
    CHECK(a.outcomes[i].statistic == b.outcomes[i].statistic);
    CHECK(a.outcomes[i].beta_hat == b.outcomes[i].beta_hat);
  }
  CHECK(a.rejections <= a.replicates);
  CHECK(a.mc_se == doctest::Approx(std::sqrt(a.empirical_power * (1 - a.empirical_power) / a.used)));
}

TEST_CASE("type I error zeroes the first effect") {
  SimulationOptions o;
  o.reps = 200;
  o.base_seed = 5;
  o.threads = 4;
  const auto r = type_i_error(row1(), o);
  // Binomial(200, 0.05) stays below 0.1 with overwhelming probability.
  CHECK(r.empirical_power < 0.1);
  CHECK(r.loglik_ascent);
}

TEST_CASE("omnibus simulation uses the F statistic") {
  auto sc = row1();
  sc.test = TestSpec{TestKind::Omnibus, {}, {}, sc.effect.beta};
  SimulationOptions o;
  o.reps = 40;
  o.threads = 4;
  const auto r = empirical_power(sc, o);
  for (const auto& out : r.outcomes)
    if (out.used) CHECK(out.statistic >= 0.0);
  CHECK(r.empirical_power > 0.5);
}

TEST_CASE("empirical covariance of the estimator follows the unequal-size formula") {
  const auto vc = icc_to_components(bex_expand(vec({0.05, 0.1}), 0.03, 0.3, vec({1.0, 1.0})));
  const int n = 40;
  const double m_bar = 20, cv = 0.6;
  SimulationScenario sc{vc, {Vector::Zero(2), Vector::Zero(2)}, DesignSpec{n, m_bar, cv, 0.5, 0.05},
                        TestSpec{TestKind::Omnibus, {}, {}, Vector::Zero(2)}};
  SimulationOptions o;
  o.reps = 1500;
  o.base_seed = 31;
  o.threads = 8;
  o.em.compute_se = false;
  const auto r = empirical_power(sc, o);
  Matrix cov = Matrix::Zero(2, 2);
  int used = 0;
  for (const auto& out : r.outcomes) {
    if (out.status != FitStatus::Converged) continue;
    cov += out.beta_hat * out.beta_hat.transpose();
    ++used;
  }
  cov /= used;
  const Matrix predicted = omega_unequal(vc, m_bar, cv, 0.25).omega / n;
  for (int k = 0; k < 2; ++k) {
    const double se = predicted(k, k) * std::sqrt(2.0 / used);
    CHECK(std::abs(cov(k, k) - predicted(k, k)) < 0.05 * predicted(k, k) + 2.0 * se);
  }
}
