#include "cocrt/matstat/distributions.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <functional>

#include "cocrt/error.hpp"

namespace cocrt {

namespace bm = boost::math;

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kMixtureTol = 1e-14;
constexpr int kMaxMixtureTerms = 100000;

double student_t_pdf(double x, double df) {
  const double log_norm = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
                          0.5 * std::log(df * M_PI);
  return std::exp(log_norm - 0.5 * (df + 1.0) * std::log1p(x * x / df));
}

double central_f_pdf(double x, int d1, int d2) {
  if (x <= 0.0) return 0.0;
  const double denom = d1 * x + d2;
  const double y = d1 * x / denom;
  return bm::ibeta_derivative(0.5 * d1, 0.5 * d2, y) * d1 * static_cast<double>(d2) /
         (denom * denom);
}

// Invert a continuous CDF on [lo, hi]: bisection until the bracket is narrow,
// then safeguarded Newton steps.
double invert_cdf(const std::function<double(double)>& cdf,
                  const std::function<double(double)>& pdf, double p, double lo, double hi) {
  for (int i = 0; i < 200 && (hi - lo) > 1e-6 * std::max(1.0, std::abs(lo) + std::abs(hi));
       ++i) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 50; ++i) {
    const double err = cdf(x) - p;
    if (std::abs(err) < 1e-14) break;
    if (err < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double d = pdf(x);
    double next = (d > 0.0) ? x - err / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x) break;
    x = next;
  }
  return x;
}

// Sum_j Poisson(j; lambda) * g(j) where g is monotone in j with values in [0, 1].
// `decreasing` tells which way g runs so the truncated tails can be bounded.
double poisson_mixture(double lambda, const std::function<double(int)>& g, bool decreasing) {
  if (lambda <= 0.0) return g(0);
  if (lambda > 1e8) {
    throw Error(ErrorCode::NonConvergence, "noncentral F series: noncentrality too large");
  }
  const int mode = static_cast<int>(std::floor(lambda));
  const double w_mode =
      std::exp(-lambda + mode * std::log(lambda) - std::lgamma(mode + 1.0));

  double sum = 0.0;
  int terms = 0;

  double w = w_mode;
  for (int j = mode;; ++j) {
    const double gj = g(j);
    sum += w * gj;
    if (++terms > kMaxMixtureTerms) {
      throw Error(ErrorCode::NonConvergence, "noncentral F series exceeded 100000 terms");
    }
    const double tail_mass = bm::gamma_p(j + 1.0, lambda);  // P(Poisson > j)
    const double bound = tail_mass * (decreasing ? gj : 1.0);
    if (w * gj < kMixtureTol && bound < kMixtureTol) break;
    w *= lambda / (j + 1.0);
  }

  w = w_mode;
  for (int j = mode - 1; j >= 0; --j) {
    w *= (j + 1.0) / lambda;
    const double gj = g(j);
    sum += w * gj;
    if (++terms > kMaxMixtureTerms) {
      throw Error(ErrorCode::NonConvergence, "noncentral F series exceeded 100000 terms");
    }
    if (j == 0) break;
    const double tail_mass = bm::gamma_q(static_cast<double>(j), lambda);  // P(Poisson < j)
    const double bound = tail_mass * (decreasing ? 1.0 : gj);
    if (w * gj < kMixtureTol && bound < kMixtureTol) break;
  }
  return std::min(1.0, std::max(0.0, sum));
}

void check_f_args(int d1, int d2) {
  require(d1 >= 1 && d2 >= 1, "F distribution degrees of freedom must be >= 1");
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / kSqrt2); }

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal_quantile: p must be in (0, 1)");
  return -kSqrt2 * bm::erfc_inv(2.0 * p);
}

double student_t_sf(double x, double df) {
  require(df > 0.0, "student_t: df must be positive");
  if (std::isinf(df)) return normal_sf(x);
  if (std::isinf(x)) return x > 0 ? 0.0 : 1.0;
  const double x2 = x * x;
  double half_tail;  // P(T > |x|)
  if (x2 < df) {
    half_tail = 0.5 * bm::ibetac(0.5, 0.5 * df, x2 / (df + x2));
  } else {
    half_tail = 0.5 * bm::ibeta(0.5 * df, 0.5, df / (df + x2));
  }
  return x >= 0.0 ? half_tail : 1.0 - half_tail;
}

double student_t_cdf(double x, double df) {
  if (std::isinf(df)) return normal_cdf(x);
  return student_t_sf(-x, df);
}

double student_t_quantile(double p, double df) {
  require(p > 0.0 && p < 1.0, "student_t_quantile: p must be in (0, 1)");
  require(df > 0.0, "student_t_quantile: df must be positive");
  if (std::isinf(df)) return normal_quantile(p);
  if (p == 0.5) return 0.0;
  auto cdf = [df](double x) { return student_t_cdf(x, df); };
  auto pdf = [df](double x) { return student_t_pdf(x, df); };
  if (p < 0.5) {
    double lo = -1.0;
    while (cdf(lo) > p) lo *= 2.0;
    return invert_cdf(cdf, pdf, p, lo, 0.0);
  }
  double hi = 1.0;
  while (cdf(hi) < p) hi *= 2.0;
  return invert_cdf(cdf, pdf, p, 0.0, hi);
}

double central_f_cdf(double x, int d1, int d2) {
  check_f_args(d1, d2);
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double denom = d1 * x + d2;
  return bm::ibeta(0.5 * d1, 0.5 * d2, d1 * x / denom);
}

double central_f_quantile(double p, int d1, int d2) {
  check_f_args(d1, d2);
  require(p > 0.0 && p < 1.0, "central_f_quantile: p must be in (0, 1)");
  auto cdf = [d1, d2](double x) { return central_f_cdf(x, d1, d2); };
  auto pdf = [d1, d2](double x) { return central_f_pdf(x, d1, d2); };
  double hi = 1.0;
  while (cdf(hi) < p) hi *= 2.0;
  return invert_cdf(cdf, pdf, p, 0.0, hi);
}

double chi_square_quantile(double p, double df) {
  require(df > 0.0, "chi_square_quantile: df must be positive");
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return 2.0 * bm::gamma_p_inv(0.5 * df, p);
}

double noncentral_f_cdf(double x, int d1, int d2, double tau) {
  check_f_args(d1, d2);
  require(tau >= 0.0 && std::isfinite(tau), "noncentral_f_cdf: tau must be finite and >= 0");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double y = d1 * x / (d1 * x + d2);
  const double a = 0.5 * d1;
  const double b = 0.5 * d2;
  return poisson_mixture(
      0.5 * tau, [&](int j) { return bm::ibeta(a + j, b, y); }, /*decreasing=*/true);
}

double noncentral_f_sf(double x, int d1, int d2, double tau) {
  check_f_args(d1, d2);
  require(tau >= 0.0 && std::isfinite(tau), "noncentral_f_sf: tau must be finite and >= 0");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double y = d1 * x / (d1 * x + d2);
  const double a = 0.5 * d1;
  const double b = 0.5 * d2;
  return poisson_mixture(
      0.5 * tau, [&](int j) { return bm::ibetac(a + j, b, y); }, /*decreasing=*/false);
}

}  // namespace cocrt
