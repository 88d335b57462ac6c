#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "cocrt/core_types.hpp"
#include "cocrt/mlmm_em.hpp"
#include "cocrt/power.hpp"
#include "cocrt/simulate.hpp"

namespace cocrt {

using Json = nlohmann::ordered_json;

enum class SolveFor { ClusterCount, ClusterSize };

/// A design scenario as read from JSON.  Layout:
///
///   model       {k?, rho0, rho1, rho2, sigma_y2}  or  {sigma_phi, sigma_e}
///               rho0 may be a scalar, a K-vector, or {"from": a, "to": b}
///               for K evenly spaced values; rho1 / rho2 may be scalars
///               (one value for every endpoint pair) or K x K matrices.
///   effect      {gamma?, beta} or {gamma?, beta_sd}; beta_sd scales sqrt(sigma_y2)
///   design      {n?, m_bar?, cv, z_bar, alpha}
///   test        {kind: omnibus|homogeneity|custom|iu, contrast?, delta?}
///   solver      {target_power, solve: n|m, step, ceiling}
///   simulation  {reps, seed, threads}
///   iu          {distribution: noncentral|shifted|normal}
///
/// Unknown keys are rejected.
struct Scenario {
  std::optional<IccSet> icc;  // set when the model block used ICCs
  VarianceComponents vc;
  EffectModel effect;
  DesignSpec design;  // n or m_bar is 0 when omitted
  bool has_n = false;
  bool has_m_bar = false;
  TestSpec test;
  double target_power = 0.8;
  std::optional<SolveFor> solve;
  SolverOptions solver{};
  int reps = 1000;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 => hardware concurrency

  int k() const { return vc.k(); }
  SimulationScenario simulation() const;
};

/// Throws Error(InvalidArgument) naming the offending field.
Scenario parse_scenario(const Json& doc);
Scenario load_scenario(const std::string& path);

/// The resolved scenario (both parameterizations, defaults filled in).
Json to_json(const Scenario& scenario);

Json to_json(const PowerResult& result);
Json to_json(const SampleSizeResult& result);
Json to_json(const FitResult& fit);
Json to_json(const SimulationReport& report, bool include_outcomes = true);
Json to_json(std::span<const AxisSpec> axes, std::span<const GridCell> cells);

Json matrix_to_json(const Matrix& m);
Json vector_to_json(const Vector& v);

/// One row per cell: axis names, power, mc_error, feasible, note.
void write_grid_csv(std::ostream& out, std::span<const AxisSpec> axes,
                    std::span<const GridCell> cells);

/// One row per replicate.
void write_outcomes_csv(std::ostream& out, const SimulationReport& report);

/// Parses "lo:hi:count" (inclusive, evenly spaced) or a comma list "a,b,c".
std::vector<double> parse_axis_values(const std::string& text);

/// Parses "name=values", e.g. "rho0=0.01:0.09:9" or "rho2=0.4,0.79".
AxisSpec parse_axis_flag(const std::string& text);

}  // namespace cocrt
