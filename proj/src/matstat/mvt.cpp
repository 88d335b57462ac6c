#include "cocrt/matstat/mvt.hpp"

#include <algorithm>
#include <array>
#include <boost/math/distributions/non_central_t.hpp>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "cocrt/error.hpp"
#include "cocrt/matstat/rng.hpp"

namespace cocrt {

namespace {

constexpr std::array<double, kMaxEndpoints + 1> kPrimes = {
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59};

double frac(double x) { return x - std::floor(x); }

double univariate_tail(double lower, double location, double df, MvtKind kind) {
  if (std::isinf(df)) return normal_sf(lower - location);
  if (kind == MvtKind::Shifted || location == 0.0) return student_t_sf(lower - location, df);
  boost::math::non_central_t_distribution<double> dist(df, location);
  return boost::math::cdf(boost::math::complement(dist, lower));
}

// One Genz integrand evaluation.  `w` holds dims uniforms in (0, 1); when the
// chi variable is present it is w[0].
class Integrand {
 public:
  Integrand(std::vector<double> lower, std::vector<double> location, Matrix chol, double df,
            MvtKind kind)
      : lower_(std::move(lower)),
        location_(std::move(location)),
        chol_(std::move(chol)),
        df_(df),
        kind_(kind),
        k_(static_cast<int>(lower_.size())),
        y_(lower_.size(), 0.0) {}

  int dims() const { return (k_ - 1) + (std::isinf(df_) ? 0 : 1); }

  double operator()(const double* w) {
    double s = 1.0;
    int next = 0;
    if (!std::isinf(df_)) {
      s = std::sqrt(chi_square_quantile(w[next++], df_) / df_);
    }
    double prod = 1.0;
    for (int i = 0; i < k_; ++i) {
      const double a = (kind_ == MvtKind::Shifted) ? (lower_[i] - location_[i]) * s
                                                   : lower_[i] * s - location_[i];
      double acc = 0.0;
      for (int j = 0; j < i; ++j) acc += chol_(i, j) * y_[j];
      const double b = (a - acc) / chol_(i, i);
      const double d = normal_sf(b);
      prod *= d;
      if (prod <= 0.0) return 0.0;
      if (i + 1 < k_) {
        const double u = std::max(w[next++] * d, std::numeric_limits<double>::min());
        y_[i] = -normal_quantile(std::min(u, 1.0 - 1e-16));
      }
    }
    return prod;
  }

 private:
  std::vector<double> lower_;
  std::vector<double> location_;
  Matrix chol_;
  double df_;
  MvtKind kind_;
  int k_;
  std::vector<double> y_;
};

}  // namespace

MvtResult mvt_rectangle(std::span<const double> lower, std::span<const double> location,
                        const SpdMatrix& shape, double df, const MvtOptions& options) {
  const auto k = static_cast<Eigen::Index>(lower.size());
  require(k >= 1 && k <= kMaxEndpoints, "mvt_rectangle: dimension must be in [1, 16]");
  require(static_cast<Eigen::Index>(location.size()) == k && shape.dim() == k,
          "mvt_rectangle: dimension mismatch");
  require(df >= 1.0, "mvt_rectangle: df must be >= 1 or infinite");
  require(options.replicates >= 2, "mvt_rectangle: need at least two replicates");
  for (Eigen::Index i = 0; i < k; ++i) {
    require(std::abs(shape(i, i) - 1.0) < 1e-10, "mvt_rectangle: shape must have unit diagonal");
    require(!std::isnan(lower[i]) && std::isfinite(location[i]),
            "mvt_rectangle: limits must not be NaN and location must be finite");
  }

  if (k == 1) {
    return {univariate_tail(lower[0], location[0], df, options.kind), 0.0, 0, true};
  }

  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  if (options.reorder) {
    std::vector<double> tail(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      tail[i] = normal_sf(lower[i] - location[i]);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return tail[a] < tail[b]; });
  }
  std::vector<double> lo(order.size());
  std::vector<double> loc(order.size());
  Matrix permuted(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    lo[i] = lower[order[i]];
    loc[i] = location[order[i]];
    for (Eigen::Index j = 0; j < k; ++j) permuted(i, j) = shape(order[i], order[j]);
  }
  Integrand f(std::move(lo), std::move(loc), SpdMatrix(permuted).lower(), df, options.kind);
  const int dims = f.dims();

  std::array<double, kMaxEndpoints + 1> gen{};
  for (int d = 0; d < dims; ++d) gen[d] = frac(std::sqrt(kPrimes[d]));

  const int reps = options.replicates;
  std::vector<std::array<double, kMaxEndpoints + 1>> shifts(reps);
  for (int r = 0; r < reps; ++r) {
    Engine eng = RngStream(options.seed, static_cast<std::uint64_t>(r)).engine();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int d = 0; d < dims; ++d) shifts[r][d] = unif(eng);
  }

  std::vector<double> sums(reps, 0.0);
  std::size_t done = 0;  // lattice points evaluated per replicate
  std::size_t target = std::max<std::size_t>(options.initial_points, 16);
  std::array<double, kMaxEndpoints + 1> w{};
  const double eps = 1e-15;

  MvtResult result;
  for (;;) {
    for (int r = 0; r < reps; ++r) {
      for (std::size_t j = done + 1; j <= target; ++j) {
        for (int d = 0; d < dims; ++d) {
          const double x = frac(static_cast<double>(j) * gen[d] + shifts[r][d]);
          w[d] = std::clamp(std::abs(2.0 * x - 1.0), eps, 1.0 - eps);
        }
        sums[r] += f(w.data());
      }
    }
    done = target;

    double mean = 0.0;
    for (double s : sums) mean += s / static_cast<double>(done);
    mean /= reps;
    double var = 0.0;
    for (double s : sums) {
      const double e = s / static_cast<double>(done) - mean;
      var += e * e;
    }
    var /= (reps - 1.0);
    result.probability = std::clamp(mean, 0.0, 1.0);
    result.mc_error = 3.0 * std::sqrt(var / reps);
    result.points = done * static_cast<std::size_t>(reps);

    if (result.mc_error < options.abs_tol) return result;
    if (2 * result.points > options.max_total_points) break;
    target *= 2;
  }

  result.accuracy_reached = false;
  if (options.throw_on_cap) {
    throw Error(ErrorCode::AccuracyNotReached,
                "mvt_rectangle: error " + std::to_string(result.mc_error) + " after " +
                    std::to_string(result.points) + " points");
  }
  return result;
}

}  // namespace cocrt
