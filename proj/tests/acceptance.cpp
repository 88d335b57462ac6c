// Acceptance run: one PASS/FAIL line per criterion.  Exit status is the number
// of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cocrt/error.hpp"
#include "cocrt/matstat/distributions.hpp"
#include "cocrt/matstat/mvt.hpp"
#include "cocrt/mlmm_em.hpp"
#include "cocrt/parallel.hpp"
#include "cocrt/power.hpp"
#include "cocrt/simulate.hpp"
#include "oracles.hpp"

using namespace cocrt;

namespace {

using Clock = std::chrono::steady_clock;

Vector vec(std::initializer_list<double> v) {
  Vector out(v.size());
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const char* title, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("[%s] %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(),
              secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

TestSpec spec(TestKind kind, const Vector& beta) { return TestSpec{kind, {}, {}, beta}; }

VarianceComponents kdpp() {
  return VarianceComponents(mat2(8.3, 9.1, 9.1, 11.2), mat2(170.0, 94.2, 94.2, 84.8));
}

VarianceComponents graded_design(double kappa, double rho2) {
  return icc_to_components(bex_expand(sequence_rho0(kappa, 0.1, 2), kappa / 2, rho2, vec({1, 2})));
}

Outcome kdpp_sample_sizes() {
  const auto t0 = Clock::now();
  const auto vc = kdpp();
  const Vector beta = 0.3 * vc.sigma_y2().cwiseSqrt();
  const DesignSpec design{0, 17, 0.19, 0.5, 0.05};
  const auto omni = solve_clusters(vc, design, spec(TestKind::Omnibus, beta), 0.8);
  const auto iu = solve_clusters(vc, design, spec(TestKind::IntersectionUnion, beta), 0.8);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {omni.value == 48 && iu.value == 50 && secs < 5.0,
          fmt("omnibus n=%d (power %.4f), IU n=%d (power %.4f)", omni.value,
              omni.achieved.power, iu.value, iu.achieved.power)};
}

Outcome kdpp_iccs() {
  const IccSet icc = components_to_icc(kdpp());
  auto r2 = [](double x) { return std::round(x * 100) / 100; };
  const double got[4] = {icc.rho0()[0], icc.rho0()[1], icc.rho1()(0, 1), icc.rho2()(0, 1)};
  const double want[4] = {0.05, 0.12, 0.07, 0.79};
  bool ok = true;
  for (int i = 0; i < 4; ++i) ok = ok && std::abs(r2(got[i]) - want[i]) < 1e-9;
  ok = ok && std::abs(icc.sigma_y2()[0] - 178.4) <= 0.15 && std::abs(icc.sigma_y2()[1] - 96.0) <= 0.15;
  return {ok, fmt("rho0=(%.4f, %.4f) rho1=%.4f rho2=%.4f sigma_y2=(%.1f, %.1f)", got[0], got[1],
                  got[2], got[3], icc.sigma_y2()[0], icc.sigma_y2()[1])};
}

Outcome predicted_rows() {
  struct Row {
    Vector beta;
    double cv, kappa, rho2, m;
    int n;
    double psi;
  };
  const std::vector<Row> rows{{vec({0.3, 0.7}), 0.0, 0.01, 0.2, 60, 16, 0.841},
                              {vec({0.3, 0.7}), 0.8, 0.05, 0.5, 60, 26, 0.832},
                              {vec({0.5, 0.7}), 0.4, 0.05, 0.2, 80, 14, 0.803}};
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const auto s = solve_clusters(graded_design(r.kappa, r.rho2), DesignSpec{0, r.m, r.cv, 0.5, 0.05},
                                  spec(TestKind::IntersectionUnion, r.beta), 0.8);
    ok = ok && s.value == r.n && std::abs(s.achieved.power - r.psi) <= 0.005;
    detail += fmt("n=%d psi=%.4f; ", s.value, s.achieved.power);
  }
  ok = ok && std::chrono::duration<double>(Clock::now() - t0).count() < 30.0;
  return {ok, detail};
}

SimulationScenario row1_simulation() {
  const Vector beta = vec({0.3, 0.7});
  return SimulationScenario{graded_design(0.01, 0.2), {Vector::Zero(2), beta},
                            DesignSpec{16, 60, 0.0, 0.5, 0.05},
                            spec(TestKind::IntersectionUnion, beta)};
}

bool row1_ascent = false;
int row1_fits = 0;

Outcome empirical_row() {
  SimulationOptions o;
  o.reps = 1000;
  o.base_seed = 2024;
  o.threads = default_threads();
  const auto power = empirical_power(row1_simulation(), o);
  const auto null = type_i_error(row1_simulation(), o);
  row1_ascent = power.loglik_ascent && null.loglik_ascent;
  row1_fits = 2 * o.reps;
  const bool ok = std::abs(power.empirical_power - 0.854) <= 0.035 &&
                  null.empirical_power >= 0.03 && null.empirical_power <= 0.075;
  return {ok, fmt("power %.3f (%d used, %d excluded), type I error %.3f (%d used, %d excluded)",
                  power.empirical_power, power.used, power.excluded, null.empirical_power,
                  null.used, null.excluded)};
}

Outcome contour_ranges() {
  const IccSet base = bex_expand(vec({0.05, 0.12}), 0.07, 0.79, vec({178.3, 96.0}));
  const Vector beta = 0.3 * base.sigma_y2().cwiseSqrt();
  GridScenario g{base, vec({1.0, 2.4}), beta, DesignSpec{60, 17, 0.19, 0.5, 0.05}, {}, {}};
  std::vector<double> rho0(9), ratio(15);
  for (int i = 0; i < 9; ++i) rho0[i] = 0.01 + 0.01 * i;
  for (int i = 0; i < 15; ++i) ratio[i] = 0.1 + 0.1 * i;
  const std::vector<AxisSpec> axes{
      {GridAxis::Rho0, rho0}, {GridAxis::Rho1Ratio, ratio}, {GridAxis::Rho2, {0.4, 0.79}}};

  auto range = [&](TestKind kind, int& infeasible) {
    g.test = spec(kind, g.beta);
    const auto cells = power_grid(g, axes, default_threads());
    double lo = 1.0, hi = 0.0;
    infeasible = 0;
    for (const auto& c : cells) {
      if (!c.feasible) {
        ++infeasible;
        continue;
      }
      lo = std::min(lo, c.power);
      hi = std::max(hi, c.power);
    }
    return std::pair{lo, hi};
  };
  int bad_iu = 0, bad_omni = 0;
  const auto [iu_lo, iu_hi] = range(TestKind::IntersectionUnion, bad_iu);
  const auto [om_lo, om_hi] = range(TestKind::Omnibus, bad_omni);
  const bool ok = bad_iu == 0 && bad_omni == 0 && std::abs(iu_lo - 0.67) <= 0.01 &&
                  std::abs(iu_hi - 0.99) <= 0.01 && std::abs(om_lo - 0.76) <= 0.01 &&
                  om_hi >= 0.99 && om_hi <= 1.0;
  return {ok, fmt("IU [%.3f, %.3f], omnibus [%.3f, %.3f], %d cells per test",
                  iu_lo, iu_hi, om_lo, om_hi, static_cast<int>(rho0.size() * ratio.size() * 2))};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> pick_k(1, 4), pick_m(1, 50);
  double worst_omega = 0.0, worst_inverse = 0.0, worst_factor = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = pick_k(rng), m = pick_m(rng);
    const auto vc = oracle::random_vc(k, rng);
    const Matrix dense = oracle::dense_omega(vc, m, 4, 0.5);
    const Matrix fast = omega_equal(vc, m, 0.25).omega;
    worst_omega = std::max(worst_omega, (fast - dense).cwiseAbs().maxCoeff() / dense.cwiseAbs().maxCoeff());

    const auto p = cluster_precision(vc.sigma_phi(), vc.sigma_e(), m);
    const Matrix vinv = oracle::dense_cluster_cov(vc.sigma_phi(), vc.sigma_e(), m).inverse();
    double err = 0.0;
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        const Matrix blk = p.between + (a == b ? p.within : Matrix::Zero(k, k));
        err = std::max(err, (blk - vinv.block(a * k, b * k, k, k)).cwiseAbs().maxCoeff());
      }
    worst_inverse = std::max(worst_inverse, err / vinv.cwiseAbs().maxCoeff());
  }
  std::uniform_real_distribution<double> u_rho(0.001, 0.3), u_cv(0.05, 0.9), u_m(2.0, 100.0),
      u_var(0.5, 4.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = pick_k(rng);
    Vector rho0(k), sigma_y2(k);
    for (int i = 0; i < k; ++i) {
      rho0[i] = u_rho(rng);
      sigma_y2[i] = u_var(rng);
    }
    const double m_bar = u_m(rng), cv = u_cv(rng);
    const auto vc = icc_to_components(bex_expand(rho0, 0.0, 0.0, sigma_y2));
    const Matrix theta = correction_matrix(vc, m_bar, cv);
    for (int i = 0; i < k; ++i)
      worst_factor = std::max(worst_factor, std::abs(theta(i, i) - correction_factor(rho0[i], m_bar, cv)));
  }
  return {worst_omega < 1e-10 && worst_inverse < 1e-10 && worst_factor < 1e-12,
          fmt("omega %.1e, structured inverse %.1e, scalar correction %.1e", worst_omega,
              worst_inverse, worst_factor)};
}

// True if successive values move in `direction` (+1 up, -1 down) by more than 1e-4.
bool strict(const std::vector<double>& v, int direction) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (direction * (v[i] - v[i - 1]) <= 1e-4) return false;
  return true;
}

Outcome monotonicity() {
  const DesignSpec design{30, 20, 0.0, 0.5, 0.05};
  const Vector equal_sd = vec({1.0, 1.0});
  const double base_rho0 = 0.05, base_rho1 = 0.02, base_rho2 = 0.3;
  const std::vector<double> rho0s{0.03, 0.045, 0.06, 0.075, 0.09};
  const std::vector<double> rho1s{0.0, 0.005, 0.01, 0.015, 0.02};
  const std::vector<double> rho2s{0.1, 0.2, 0.3, 0.4, 0.5};

  auto curve = [&](TestKind kind, const Vector& beta, int axis) {
    const std::vector<double>& xs = axis == 0 ? rho0s : axis == 1 ? rho1s : rho2s;
    std::vector<double> out;
    for (double x : xs) {
      const double r0 = axis == 0 ? x : base_rho0;
      const double r1 = axis == 1 ? x : base_rho1;
      const double r2 = axis == 2 ? x : base_rho2;
      const auto vc = icc_to_components(bex_expand(r0, r1, r2, equal_sd));
      out.push_back(compute_power(vc, design, spec(kind, beta)).power);
    }
    return out;
  };
  const Vector equal = vec({0.25, 0.25});
  const Vector unequal = vec({0.45, 0.15});
  struct Check {
    const char* what;
    TestKind kind;
    Vector beta;
    int axis, direction;
  };
  const std::vector<Check> checks{
      {"omnibus/rho0", TestKind::Omnibus, equal, 0, -1},
      {"omnibus/rho1", TestKind::Omnibus, equal, 1, -1},
      {"omnibus/rho2", TestKind::Omnibus, equal, 2, -1},
      {"iu/rho0", TestKind::IntersectionUnion, equal, 0, -1},
      {"iu/rho1", TestKind::IntersectionUnion, equal, 1, +1},
      {"iu/rho2", TestKind::IntersectionUnion, equal, 2, +1},
      {"homogeneity/rho0", TestKind::Homogeneity, unequal, 0, -1},
      {"homogeneity/rho1", TestKind::Homogeneity, unequal, 1, +1},
      {"homogeneity/rho2", TestKind::Homogeneity, unequal, 2, +1},
  };
  bool ok = true;
  std::string failed;
  for (const auto& c : checks) {
    const auto v = curve(c.kind, c.beta, c.axis);
    if (!strict(v, c.direction)) {
      ok = false;
      failed += fmt(" %s", c.what);
    }
  }
  return {ok, ok ? "9 curves strictly monotone" : "not monotone:" + failed};
}

Outcome numerics() {
  constexpr long kDraws = 10'000'000;
  struct MvtCase {
    Vector lower, location;
    Matrix corr;
    double df;
    MvtKind kind;
  };
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> pick_k(2, 4);
  std::uniform_real_distribution<double> u_loc(-0.5, 2.5), u_low(-0.5, 2.0);
  const double dfs[] = {4.0, 10.0, 28.0, kInfiniteDf};
  std::vector<MvtCase> cases;
  for (int i = 0; i < 20; ++i) {
    const int k = i < 2 ? 1 : pick_k(rng);
    MvtCase c{Vector(k), Vector(k), oracle::random_correlation(k, rng), dfs[i % 4],
              i % 2 ? MvtKind::Noncentral : MvtKind::Shifted};
    for (int j = 0; j < k; ++j) {
      c.lower[j] = u_low(rng);
      c.location[j] = u_loc(rng);
    }
    cases.push_back(std::move(c));
  }
  std::vector<int> mvt_ok(cases.size(), 0);
  parallel_for(cases.size(), default_threads(), [&](std::size_t i) {
    const auto& c = cases[i];
    MvtOptions o;
    o.kind = c.kind;
    const auto r = mvt_rectangle(std::span(c.lower.data(), c.lower.size()),
                                 std::span(c.location.data(), c.location.size()), SpdMatrix(c.corr),
                                 c.df, o);
    const auto mc = oracle::mc_mvt(c.lower, c.location, c.corr, c.df, c.kind, kDraws, 1000 + i);
    const double sigma = std::hypot(mc.se, r.mc_error / 3.0);
    mvt_ok[i] = std::abs(r.probability - mc.p) <= 3.0 * sigma;
  });

  struct FCase {
    double x;
    int d1, d2;
    double tau;
  };
  const std::vector<FCase> fcases{{1.5, 1, 10, 0.5}, {2.0, 2, 28, 4.0}, {3.1, 3, 40, 9.0},
                                  {0.8, 4, 15, 2.0}, {5.0, 2, 60, 25.0}, {1.2, 6, 100, 12.0}};
  std::vector<int> f_ok(fcases.size(), 0);
  parallel_for(fcases.size(), default_threads(), [&](std::size_t i) {
    const auto& c = fcases[i];
    const auto mc = oracle::mc_noncentral_f(c.x, c.d1, c.d2, c.tau, kDraws, 500 + i);
    f_ok[i] = std::abs(noncentral_f_cdf(c.x, c.d1, c.d2, c.tau) - mc.p) <= 3.0 * mc.se;
  });
  const int mvt_pass = std::count(mvt_ok.begin(), mvt_ok.end(), 1);
  const int f_pass = std::count(f_ok.begin(), f_ok.end(), 1);
  const bool ok = mvt_pass == 20 && f_pass == static_cast<int>(fcases.size()) && row1_ascent &&
                  row1_fits > 0;
  return {ok, fmt("mvt %d/20, noncentral F %d/%d, EM ascent on %d replicate fits: %s", mvt_pass,
                  f_pass, static_cast<int>(fcases.size()), row1_fits,
                  row1_ascent ? "held" : "violated")};
}

}  // namespace

int main() {
  run(1, "K-DPP sample sizes", kdpp_sample_sizes);
  run(2, "K-DPP ICC recovery", kdpp_iccs);
  run(3, "predicted power rows", predicted_rows);
  run(4, "empirical power and type I error", empirical_row);
  run(5, "sensitivity contour ranges", contour_ranges);
  run(6, "oracle equivalence", oracle_equivalence);
  run(7, "monotonicity", monotonicity);
  run(8, "numerics", numerics);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures;
}
