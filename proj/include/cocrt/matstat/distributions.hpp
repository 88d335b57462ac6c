#pragma once

#include <limits>

namespace cocrt {

inline constexpr double kInfiniteDf = std::numeric_limits<double>::infinity();

double normal_cdf(double x);
/// P(Z > x), accurate far into the upper tail.
double normal_sf(double x);
double normal_quantile(double p);

double student_t_cdf(double x, double df);
double student_t_sf(double x, double df);

/// x with |student_t_cdf(x, df) - p| < 1e-12.  df may be kInfiniteDf.
double student_t_quantile(double p, double df);

double central_f_cdf(double x, int d1, int d2);

/// x with |central_f_cdf(x, d1, d2) - p| < 1e-12, by bracketed bisection
/// followed by Newton refinement.
double central_f_quantile(double p, int d1, int d2);

/// Inverse CDF of the chi-square distribution.
double chi_square_quantile(double p, double df);

/// CDF of the noncentral F(d1, d2) with noncentrality tau.
///
/// Evaluated as the Poisson(tau / 2) mixture of regularized incomplete beta
/// terms, summed outward from the Poisson mode.  The forward sum stops once the
/// current beta term times the remaining Poisson tail mass drops below 1e-14;
/// throws Error(NonConvergence) past 100000 terms.
double noncentral_f_cdf(double x, int d1, int d2, double tau);

/// 1 - noncentral_f_cdf, summed directly so that small tails keep precision.
double noncentral_f_sf(double x, int d1, int d2, double tau);

}  // namespace cocrt
