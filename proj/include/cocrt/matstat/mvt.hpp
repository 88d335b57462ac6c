#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "cocrt/matstat/distributions.hpp"
#include "cocrt/matstat/linalg.hpp"

namespace cocrt {

/// How the location vector enters the multivariate t.
///
///  - Shifted:    T = location + Z / S
///  - Noncentral: T = (Z + location) / S
///
/// with Z ~ N(0, shape) and S = sqrt(chi2_df / df) independent.  The two agree
/// when df is infinite.  Noncentral is the Kshirsagar form used by
/// R's mvtnorm::pmvt by default.
enum class MvtKind { Shifted, Noncentral };

struct MvtOptions {
  MvtKind kind = MvtKind::Shifted;
  /// Required half-width (3 standard errors across replicates).
  double abs_tol = 5e-4;
  int replicates = 8;
  std::size_t initial_points = 1024;  // per replicate
  std::size_t max_total_points = std::size_t{1} << 24;
  std::uint64_t seed = 20230417;
  /// Order variables by increasing marginal tail probability before factoring.
  bool reorder = true;
  /// When false, a capped run returns with `accuracy_reached == false`
  /// instead of throwing Error(AccuracyNotReached).
  bool throw_on_cap = true;
};

struct MvtResult {
  double probability = 0.0;
  double mc_error = 0.0;  // 3 x replicate standard error
  std::size_t points = 0;
  bool accuracy_reached = true;
};

/// P(T_k > lower_k for all k) for a multivariate t with correlation `shape`,
/// location `location` and `df` degrees of freedom (kInfiniteDf gives the
/// multivariate normal).
///
/// Separation of variables (Genz) over a randomized Richtmyer lattice with
/// baker's transform; the chi variable, when present, is the first coordinate.
/// Sample size doubles per replicate until mc_error < abs_tol.  One-dimensional
/// problems are evaluated in closed form (mc_error = 0).
MvtResult mvt_rectangle(std::span<const double> lower, std::span<const double> location,
                        const SpdMatrix& shape, double df, const MvtOptions& options = {});

}  // namespace cocrt
