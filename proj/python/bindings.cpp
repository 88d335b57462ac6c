#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cocrt/core_types.hpp"
#include "cocrt/dataset.hpp"
#include "cocrt/error.hpp"
#include "cocrt/matstat/distributions.hpp"
#include "cocrt/matstat/mvt.hpp"
#include "cocrt/mlmm_em.hpp"
#include "cocrt/parallel.hpp"
#include "cocrt/power.hpp"
#include "cocrt/scenario.hpp"
#include "cocrt/simulate.hpp"

namespace py = pybind11;
using namespace cocrt;

// Results cross the boundary as JSON text; the Python wrapper decodes them.

namespace {

Scenario scenario_from(const std::string& text) { return parse_scenario(Json::parse(text)); }

std::string power_json(const std::string& text) {
  const Scenario sc = scenario_from(text);
  require(sc.has_n && sc.has_m_bar, "design.n and design.m_bar are required");
  return to_json(compute_power(sc.vc, sc.design, sc.test, sc.solver.power)).dump();
}

std::string sample_size_json(const std::string& text, const std::string& solve) {
  const Scenario sc = scenario_from(text);
  require(solve == "n" || solve == "m", "solve must be \"n\" or \"m\"");
  SampleSizeResult r;
  if (solve == "n") {
    require(sc.has_m_bar, "design.m_bar is required to solve for n");
    r = solve_clusters(sc.vc, sc.design, sc.test, sc.target_power, sc.solver);
  } else {
    require(sc.has_n, "design.n is required to solve for m_bar");
    r = solve_cluster_size(sc.vc, sc.design, sc.test, sc.target_power, sc.solver);
  }
  Json j = to_json(r);
  j["solve"] = solve;
  return j.dump();
}

std::string simulate_json(const std::string& text, bool null_effect, bool outcomes) {
  const Scenario sc = scenario_from(text);
  require(sc.has_n && sc.has_m_bar, "design.n and design.m_bar are required");
  SimulationOptions opt;
  opt.reps = sc.reps;
  opt.base_seed = sc.seed;
  opt.threads = sc.threads > 0 ? sc.threads : default_threads();
  const auto r = null_effect ? type_i_error(sc.simulation(), opt) : empirical_power(sc.simulation(), opt);
  return to_json(r, outcomes).dump();
}

TrialDataset dataset_from(const std::vector<long>& cluster_id, const std::vector<int>& arm,
                          const Matrix& y) {
  require(cluster_id.size() == arm.size() && static_cast<Eigen::Index>(arm.size()) == y.rows(),
          "cluster_id, arm and y must have one entry per subject");
  TrialDataset d;
  d.y = y;
  std::unordered_map<long, int> index;
  for (std::size_t r = 0; r < cluster_id.size(); ++r) {
    auto [it, inserted] = index.try_emplace(cluster_id[r], static_cast<int>(d.clusters.size()));
    if (inserted) d.clusters.push_back({cluster_id[r], arm[r], 0});
    require(d.clusters[it->second].arm == arm[r],
            "cluster " + std::to_string(cluster_id[r]) + " appears in both arms");
    ++d.clusters[it->second].size;
    d.subject_cluster.push_back(it->second);
  }
  d.validate();
  return d;
}

std::string fit_json(const TrialDataset& d, double tol, int max_iter) {
  EmOptions o;
  o.tol = tol;
  o.max_iter = max_iter;
  return to_json(em_fit(d, o)).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Power, sample size and MLMM fitting for cluster randomized trials";

  static py::exception<Error> error(m, "CocrtError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def("icc_to_components",
        [](const Vector& rho0, const Matrix& rho1, const Matrix& rho2, const Vector& sigma_y2) {
          const auto vc = icc_to_components(IccSet(rho0, rho1, rho2, sigma_y2));
          return py::make_tuple(vc.sigma_phi(), vc.sigma_e());
        },
        py::arg("rho0"), py::arg("rho1"), py::arg("rho2"), py::arg("sigma_y2"));

  m.def("components_to_icc",
        [](const Matrix& sigma_phi, const Matrix& sigma_e) {
          const IccSet icc = components_to_icc(VarianceComponents(sigma_phi, sigma_e));
          py::dict out;
          out["rho0"] = icc.rho0();
          out["rho1"] = icc.rho1();
          out["rho2"] = icc.rho2();
          out["sigma_y2"] = icc.sigma_y2();
          return out;
        },
        py::arg("sigma_phi"), py::arg("sigma_e"));

  m.def("omega",
        [](const Matrix& sigma_phi, const Matrix& sigma_e, double m_bar, double cv, double z_bar) {
          const DesignSpec d{2, m_bar, cv, z_bar, 0.05};
          return effect_distribution(VarianceComponents(sigma_phi, sigma_e), d).omega;
        },
        py::arg("sigma_phi"), py::arg("sigma_e"), py::arg("m_bar"), py::arg("cv") = 0.0,
        py::arg("z_bar") = 0.5);

  m.def("mvt_rectangle",
        [](const Vector& lower, const Vector& location, const Matrix& corr, double df,
           bool noncentral) {
          MvtOptions o;
          o.kind = noncentral ? MvtKind::Noncentral : MvtKind::Shifted;
          const auto r = mvt_rectangle(std::span(lower.data(), lower.size()),
                                       std::span(location.data(), location.size()), SpdMatrix(corr),
                                       df, o);
          return py::make_tuple(r.probability, r.mc_error);
        },
        py::arg("lower"), py::arg("location"), py::arg("corr"), py::arg("df"),
        py::arg("noncentral") = true);

  m.def("noncentral_f_cdf", &noncentral_f_cdf, py::arg("x"), py::arg("d1"), py::arg("d2"),
        py::arg("tau"));

  m.def("power_json", &power_json, py::arg("scenario"), py::call_guard<py::gil_scoped_release>());
  m.def("sample_size_json", &sample_size_json, py::arg("scenario"), py::arg("solve"),
        py::call_guard<py::gil_scoped_release>());
  m.def("simulate_json", &simulate_json, py::arg("scenario"), py::arg("null") = false,
        py::arg("outcomes") = false, py::call_guard<py::gil_scoped_release>());
  m.def("resolve_json", [](const std::string& text) { return to_json(scenario_from(text)).dump(); },
        py::arg("scenario"));

  m.def("fit_json",
        [](const std::vector<long>& cluster_id, const std::vector<int>& arm, const Matrix& y,
           double tol, int max_iter) { return fit_json(dataset_from(cluster_id, arm, y), tol, max_iter); },
        py::arg("cluster_id"), py::arg("arm"), py::arg("y"), py::arg("tol") = 1e-8,
        py::arg("max_iter") = 5000);
  m.def("fit_csv_json",
        [](const std::string& path, double tol, int max_iter) {
          return fit_json(read_trial_csv_file(path), tol, max_iter);
        },
        py::arg("path"), py::arg("tol") = 1e-8, py::arg("max_iter") = 5000);

  m.def("generate",
        [](const Matrix& sigma_phi, const Matrix& sigma_e, const Vector& gamma, const Vector& beta,
           int n, double m_bar, double cv, double z_bar, std::uint64_t seed) {
          const RngStream s(seed, 0);
          const auto sizes = sample_cluster_sizes(m_bar, cv, n, s.substream(0));
          const auto arms = allocate_arms(n, z_bar, s.substream(1));
          const auto d = simulate_trial({gamma, beta}, VarianceComponents(sigma_phi, sigma_e), sizes,
                                        arms, s.substream(2));
          std::vector<long> ids;
          std::vector<int> subject_arm;
          for (int c : d.subject_cluster) {
            ids.push_back(d.clusters[c].id);
            subject_arm.push_back(d.clusters[c].arm);
          }
          return py::make_tuple(ids, subject_arm, d.y);
        },
        py::arg("sigma_phi"), py::arg("sigma_e"), py::arg("gamma"), py::arg("beta"), py::arg("n"),
        py::arg("m_bar"), py::arg("cv") = 0.0, py::arg("z_bar") = 0.5, py::arg("seed") = 1);
}
