#include <cmath>
#include <string>

#include "cocrt/error.hpp"
#include "cocrt/parallel.hpp"
#include "cocrt/power.hpp"

namespace cocrt {

const char* to_string(GridAxis axis) {
  switch (axis) {
    case GridAxis::Rho0: return "rho0";
    case GridAxis::Rho1: return "rho1";
    case GridAxis::Rho1Ratio: return "rho1_ratio";
    case GridAxis::Rho2: return "rho2";
  }
  return "unknown";
}

GridAxis parse_grid_axis(const std::string& name) {
  if (name == "rho0") return GridAxis::Rho0;
  if (name == "rho1") return GridAxis::Rho1;
  if (name == "rho1_ratio") return GridAxis::Rho1Ratio;
  if (name == "rho2") return GridAxis::Rho2;
  throw Error(ErrorCode::InvalidArgument, "unknown grid axis '" + name + "'");
}

namespace {

IccSet apply_axes(const GridScenario& sc, std::span<const AxisSpec> axes,
                  const std::vector<double>& coords) {
  const IccSet& base = sc.base;
  const int k = base.k();
  Vector rho0 = base.rho0();
  Matrix rho1 = base.rho1();
  Matrix rho2 = base.rho2();
  const Vector mult = sc.rho0_multiplier.size() == 0 ? Vector::Ones(k) : sc.rho0_multiplier;

  auto set_off = [k](Matrix& m, double v) {
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b)
        if (a != b) m(a, b) = v;
  };

  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i].axis == GridAxis::Rho0) rho0 = coords[i] * mult;
  }
  for (std::size_t i = 0; i < axes.size(); ++i) {
    switch (axes[i].axis) {
      case GridAxis::Rho1: set_off(rho1, coords[i]); break;
      case GridAxis::Rho1Ratio: set_off(rho1, coords[i] * rho0[0]); break;
      case GridAxis::Rho2: set_off(rho2, coords[i]); break;
      case GridAxis::Rho0: break;
    }
  }
  rho1.diagonal() = rho0;
  return IccSet(rho0, rho1, rho2, base.sigma_y2());
}

}  // namespace

std::vector<GridCell> power_grid(const GridScenario& scenario, std::span<const AxisSpec> axes,
                                 int threads) {
  require(!axes.empty(), "power_grid needs at least one axis");
  require(scenario.rho0_multiplier.size() == 0 ||
              scenario.rho0_multiplier.size() == scenario.base.k(),
          "rho0_multiplier must have K entries");
  std::size_t total = 1;
  for (const auto& a : axes) {
    require(!a.values.empty(), std::string("axis ") + to_string(a.axis) + " has no values");
    total *= a.values.size();
  }
  scenario.design.validate();

  TestSpec test = scenario.test;
  test.beta = scenario.beta;
  test.validate(scenario.base.k());

  std::vector<GridCell> cells(total);
  parallel_for(total, threads, [&](std::size_t idx) {
    GridCell& cell = cells[idx];
    cell.coords.resize(axes.size());
    std::size_t rem = idx;
    for (std::size_t i = axes.size(); i-- > 0;) {
      const auto& vals = axes[i].values;
      cell.coords[i] = vals[rem % vals.size()];
      rem /= vals.size();
    }
    try {
      const IccSet icc = apply_axes(scenario, axes, cell.coords);
      const VarianceComponents vc = icc_to_components(icc);
      const PowerResult r = compute_power(vc, scenario.design, test, scenario.power);
      cell.feasible = true;
      cell.power = r.power;
      cell.mc_error = r.mc_error.value_or(0.0);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotPositiveDefinite && e.code() != ErrorCode::InvalidArgument &&
          e.code() != ErrorCode::DegenerateCorrection) {
        throw;
      }
      cell.feasible = false;
      cell.power = std::nan("");
      cell.note = e.what();
    }
  });
  return cells;
}

}  // namespace cocrt
