#include "cocrt/scenario.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "cocrt/error.hpp"

namespace cocrt {

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, field + ": " + what);
}

void check_keys(const Json& obj, const std::string& where, std::set<std::string> allowed) {
  if (!obj.is_object()) bad(where, "must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) bad(where + "." + key, "unknown key");
  }
}

double get_number(const Json& j, const std::string& field) {
  if (!j.is_number()) bad(field, "must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) bad(field, "must be finite");
  return v;
}

int get_int(const Json& j, const std::string& field) {
  if (!j.is_number_integer()) bad(field, "must be an integer");
  return j.get<int>();
}

Vector get_vector(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) bad(field, "must be a non-empty array of numbers");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[i] = get_number(j[i], field + "[" + std::to_string(i) + "]");
  }
  return v;
}

Matrix get_matrix(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) bad(field, "must be an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) bad(field, "rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      m(r, c) = get_number(j[r][c], field + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
  }
  return m;
}

Vector vector_or_scalar(const Json& j, int k, const std::string& field) {
  if (j.is_number()) return Vector::Constant(k, get_number(j, field));
  Vector v = get_vector(j, field);
  if (v.size() != k) bad(field, "expected " + std::to_string(k) + " entries");
  return v;
}

// Off-diagonal ICC: a scalar for every pair or a full K x K matrix.
Matrix pair_icc(const Json& j, int k, double diag_fill, const Vector& diag,
                const std::string& field) {
  Matrix m(k, k);
  if (j.is_number()) {
    m.setConstant(get_number(j, field));
  } else {
    m = get_matrix(j, field);
    if (m.rows() != k || m.cols() != k) bad(field, "must be " + std::to_string(k) + " x " + std::to_string(k));
  }
  for (int i = 0; i < k; ++i) m(i, i) = diag.size() ? diag[i] : diag_fill;
  return m;
}

struct Model {
  std::optional<IccSet> icc;
  VarianceComponents vc;
};

Model parse_model(const Json& j) {
  const bool has_icc = j.contains("rho0") || j.contains("rho1") || j.contains("rho2") ||
                       j.contains("sigma_y2");
  const bool has_vc = j.contains("sigma_phi") || j.contains("sigma_e");
  if (has_icc == has_vc) {
    bad("model", "give exactly one of {rho0, rho1, rho2, sigma_y2} or {sigma_phi, sigma_e}");
  }
  if (has_vc) {
    check_keys(j, "model", {"k", "sigma_phi", "sigma_e"});
    if (!j.contains("sigma_phi") || !j.contains("sigma_e")) {
      bad("model", "sigma_phi and sigma_e are both required");
    }
    VarianceComponents vc(get_matrix(j["sigma_phi"], "model.sigma_phi"),
                          get_matrix(j["sigma_e"], "model.sigma_e"));
    if (j.contains("k") && get_int(j["k"], "model.k") != vc.k()) bad("model.k", "does not match the matrices");
    return {std::nullopt, vc};
  }

  check_keys(j, "model", {"k", "rho0", "rho1", "rho2", "sigma_y2"});
  for (const char* key : {"rho0", "rho1", "rho2", "sigma_y2"}) {
    if (!j.contains(key)) bad(std::string("model.") + key, "is required");
  }
  int k = 0;
  if (j.contains("k")) k = get_int(j["k"], "model.k");
  else if (j["sigma_y2"].is_array()) k = static_cast<int>(j["sigma_y2"].size());
  else if (j["rho0"].is_array()) k = static_cast<int>(j["rho0"].size());
  else bad("model.k", "cannot be inferred; give k or array-valued sigma_y2");
  if (k < 1 || k > kMaxEndpoints) bad("model.k", "must lie in 1..16");

  Vector rho0;
  const Json& r0 = j["rho0"];
  if (r0.is_object()) {
    check_keys(r0, "model.rho0", {"from", "to"});
    if (!r0.contains("from") || !r0.contains("to")) bad("model.rho0", "needs from and to");
    const double from = get_number(r0["from"], "model.rho0.from");
    const double to = get_number(r0["to"], "model.rho0.to");
    if (!(from > 0.0 && from <= to && to < 1.0)) bad("model.rho0", "needs 0 < from <= to < 1");
    rho0 = sequence_rho0(from, to, k);
  } else {
    rho0 = vector_or_scalar(r0, k, "model.rho0");
  }
  const Vector sigma_y2 = vector_or_scalar(j["sigma_y2"], k, "model.sigma_y2");
  IccSet icc(rho0, pair_icc(j["rho1"], k, 0.0, rho0, "model.rho1"),
             pair_icc(j["rho2"], k, 1.0, Vector(), "model.rho2"), sigma_y2);
  return {icc, icc_to_components(icc)};
}

Json icc_json(const IccSet& icc) {
  return Json{{"k", icc.k()},
              {"rho0", vector_to_json(icc.rho0())},
              {"rho1", matrix_to_json(icc.rho1())},
              {"rho2", matrix_to_json(icc.rho2())},
              {"sigma_y2", vector_to_json(icc.sigma_y2())}};
}

const char* iu_distribution_name(const PowerOptions& p) {
  if (p.iu_normal) return "normal";
  return p.iu_kind == MvtKind::Noncentral ? "noncentral" : "shifted";
}

double num_or_nan(const std::optional<double>& v) {
  return v ? *v : std::numeric_limits<double>::quiet_NaN();
}

// JSON has no NaN; write null instead.
Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(num(v[i]));
  return out;
}

Json matrix_to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_to_json(m.row(r).transpose()));
  return out;
}

SimulationScenario Scenario::simulation() const {
  return SimulationScenario{vc, effect, design, test};
}

Scenario parse_scenario(const Json& doc) {
  check_keys(doc, "scenario", {"model", "effect", "design", "test", "solver", "simulation", "iu"});
  if (!doc.contains("model")) bad("model", "is required");
  Model model = parse_model(doc["model"]);
  const int k = model.vc.k();

  EffectModel effect{Vector::Zero(k), Vector::Zero(k)};
  if (!doc.contains("effect")) bad("effect", "is required");
  const Json& ej = doc["effect"];
  check_keys(ej, "effect", {"gamma", "beta", "beta_sd"});
  if (ej.contains("beta") == ej.contains("beta_sd")) bad("effect", "give exactly one of beta or beta_sd");
  if (ej.contains("gamma")) effect.gamma = vector_or_scalar(ej["gamma"], k, "effect.gamma");
  if (ej.contains("beta")) {
    effect.beta = vector_or_scalar(ej["beta"], k, "effect.beta");
  } else {
    effect.beta = vector_or_scalar(ej["beta_sd"], k, "effect.beta_sd")
                      .cwiseProduct(model.vc.sigma_y2().cwiseSqrt());
  }

  DesignSpec design;
  bool has_n = false;
  bool has_m = false;
  if (!doc.contains("design")) bad("design", "is required");
  const Json& dj = doc["design"];
  check_keys(dj, "design", {"n", "m_bar", "cv", "z_bar", "alpha"});
  if (dj.contains("n")) {
    design.n = get_int(dj["n"], "design.n");
    has_n = true;
  }
  if (dj.contains("m_bar")) {
    design.m_bar = get_number(dj["m_bar"], "design.m_bar");
    has_m = true;
  }
  if (dj.contains("cv")) design.cv = get_number(dj["cv"], "design.cv");
  if (dj.contains("z_bar")) design.z_bar = get_number(dj["z_bar"], "design.z_bar");
  if (dj.contains("alpha")) design.alpha = get_number(dj["alpha"], "design.alpha");
  if (has_n && design.n < 2) bad("design.n", "must be >= 2");
  if (has_m && design.m_bar < 1.0) bad("design.m_bar", "must be >= 1");
  if (design.cv < 0.0) bad("design.cv", "must be >= 0");
  if (!(design.z_bar > 0.0 && design.z_bar < 1.0)) bad("design.z_bar", "must lie in (0, 1)");
  if (!(design.alpha > 0.0 && design.alpha < 1.0)) bad("design.alpha", "must lie in (0, 1)");

  TestSpec test;
  if (doc.contains("test")) {
    const Json& tj = doc["test"];
    check_keys(tj, "test", {"kind", "contrast", "delta"});
    if (tj.contains("kind")) {
      if (!tj["kind"].is_string()) bad("test.kind", "must be a string");
      test.kind = parse_test_kind(tj["kind"].get<std::string>());
    }
    if (tj.contains("contrast")) test.contrast = get_matrix(tj["contrast"], "test.contrast");
    if (tj.contains("delta")) test.delta = get_vector(tj["delta"], "test.delta");
  }
  test.beta = effect.beta;
  test.validate(k);

  Scenario sc{.icc = model.icc, .vc = model.vc, .effect = effect, .design = design,
              .has_n = has_n, .has_m_bar = has_m, .test = test, .solve = std::nullopt};

  if (doc.contains("solver")) {
    const Json& sj = doc["solver"];
    check_keys(sj, "solver", {"target_power", "solve", "step", "ceiling"});
    if (sj.contains("target_power")) sc.target_power = get_number(sj["target_power"], "solver.target_power");
    if (sj.contains("solve")) {
      const std::string what = sj["solve"].is_string() ? sj["solve"].get<std::string>() : "";
      if (what == "n") sc.solve = SolveFor::ClusterCount;
      else if (what == "m") sc.solve = SolveFor::ClusterSize;
      else bad("solver.solve", "must be \"n\" or \"m\"");
    }
    if (sj.contains("step")) sc.solver.step = get_int(sj["step"], "solver.step");
    if (sj.contains("ceiling")) sc.solver.ceiling = get_int(sj["ceiling"], "solver.ceiling");
  }
  if (!(sc.target_power > 0.0 && sc.target_power < 1.0)) bad("solver.target_power", "must lie in (0, 1)");
  if (sc.solver.step < 1) bad("solver.step", "must be >= 1");
  if (sc.solver.ceiling < 2) bad("solver.ceiling", "must be >= 2");

  if (doc.contains("simulation")) {
    const Json& mj = doc["simulation"];
    check_keys(mj, "simulation", {"reps", "seed", "threads"});
    if (mj.contains("reps")) sc.reps = get_int(mj["reps"], "simulation.reps");
    if (mj.contains("seed")) {
      if (!mj["seed"].is_number_unsigned()) bad("simulation.seed", "must be a non-negative integer");
      sc.seed = mj["seed"].get<std::uint64_t>();
    }
    if (mj.contains("threads")) sc.threads = get_int(mj["threads"], "simulation.threads");
  }
  if (sc.reps < 1) bad("simulation.reps", "must be >= 1");
  if (sc.threads < 0) bad("simulation.threads", "must be >= 0");

  if (doc.contains("iu")) {
    const Json& ij = doc["iu"];
    check_keys(ij, "iu", {"distribution"});
    if (ij.contains("distribution")) {
      const std::string d = ij["distribution"].is_string() ? ij["distribution"].get<std::string>() : "";
      if (d == "noncentral") sc.solver.power.iu_kind = MvtKind::Noncentral;
      else if (d == "shifted") sc.solver.power.iu_kind = MvtKind::Shifted;
      else if (d == "normal") sc.solver.power.iu_normal = true;
      else bad("iu.distribution", "must be noncentral, shifted or normal");
    }
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open scenario '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "scenario '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_scenario(doc);
}

Json to_json(const Scenario& sc) {
  Json model = icc_json(components_to_icc(sc.vc));
  model["sigma_phi"] = matrix_to_json(sc.vc.sigma_phi());
  model["sigma_e"] = matrix_to_json(sc.vc.sigma_e());
  Json design{{"cv", sc.design.cv}, {"z_bar", sc.design.z_bar}, {"alpha", sc.design.alpha}};
  if (sc.has_n) design["n"] = sc.design.n;
  if (sc.has_m_bar) design["m_bar"] = sc.design.m_bar;
  Json test{{"kind", to_string(sc.test.kind)}};
  if (sc.test.is_glh()) {
    test["contrast"] = matrix_to_json(sc.test.contrast_matrix(sc.k()));
    test["delta"] = vector_to_json(sc.test.alternative(sc.k()));
  }
  Json solver{{"target_power", sc.target_power}, {"step", sc.solver.step}, {"ceiling", sc.solver.ceiling}};
  if (sc.solve) solver["solve"] = *sc.solve == SolveFor::ClusterCount ? "n" : "m";
  return Json{{"model", model},
              {"effect", {{"gamma", vector_to_json(sc.effect.gamma)}, {"beta", vector_to_json(sc.effect.beta)}}},
              {"design", design},
              {"test", test},
              {"solver", solver},
              {"simulation", {{"reps", sc.reps}, {"seed", sc.seed}}},
              {"iu", {{"distribution", iu_distribution_name(sc.solver.power)}}}};
}

Json to_json(const PowerResult& r) {
  Json out{{"power", num(r.power)}};
  out["noncentrality"] = num(num_or_nan(r.noncentrality));
  out["df_num"] = r.df_num;
  out["df_den"] = r.df_den;
  out["critical_values"] = r.critical_values;
  out["mc_error"] = num(num_or_nan(r.mc_error));
  return out;
}

Json to_json(const SampleSizeResult& r) {
  Json out{{"value", r.value}, {"achieved", to_json(r.achieved)}};
  out["previous"] = r.previous ? to_json(*r.previous) : Json(nullptr);
  return out;
}

Json to_json(const FitResult& fit) {
  const int k = static_cast<int>(fit.theta_hat.size() / 2);
  return Json{{"status", to_string(fit.status)},
              {"converged", fit.converged},
              {"iterations", fit.iterations},
              {"loglik", num(fit.loglik)},
              {"n_clusters", fit.n_clusters},
              {"z_bar", fit.z_bar},
              {"gamma_tilde", vector_to_json(fit.theta_hat.head(k))},
              {"beta", vector_to_json(fit.theta_hat.tail(k))},
              {"sigma_phi", matrix_to_json(fit.sigma_phi_hat)},
              {"sigma_e", matrix_to_json(fit.sigma_e_hat)},
              {"se_gamma_tilde", vector_to_json(fit.se_theta.head(k))},
              {"se_beta", vector_to_json(fit.se_beta)},
              {"se_sigma_phi_vech", vector_to_json(fit.se_sigma_phi)},
              {"se_sigma_e_vech", vector_to_json(fit.se_sigma_e)},
              {"wald", vector_to_json(fit.wald)},
              {"se_available", fit.se_available},
              {"se_theta_only", fit.se_theta_only},
              {"message", fit.message}};
}

Json to_json(const SimulationReport& r, bool include_outcomes) {
  Json out{{"replicates", r.replicates},
           {"used", r.used},
           {"excluded", r.excluded},
           {"rejections", r.rejections},
           {"empirical_power", r.empirical_power},
           {"mc_se", r.mc_se},
           {"loglik_ascent", r.loglik_ascent}};
  if (include_outcomes) {
    Json reps = Json::array();
    for (const auto& o : r.outcomes) {
      reps.push_back({{"index", o.index},
                      {"status", to_string(o.status)},
                      {"used", o.used},
                      {"rejected", o.rejected},
                      {"statistic", num(o.statistic)},
                      {"iterations", o.iterations},
                      {"loglik_ascent", o.loglik_ascent}});
    }
    out["outcomes"] = reps;
  }
  return out;
}

Json to_json(std::span<const AxisSpec> axes, std::span<const GridCell> cells) {
  Json ax = Json::array();
  for (const auto& a : axes) ax.push_back({{"axis", to_string(a.axis)}, {"values", a.values}});
  Json rows = Json::array();
  for (const auto& c : cells) {
    Json row{{"coords", c.coords},
             {"feasible", c.feasible},
             {"power", c.feasible ? num(c.power) : Json(nullptr)},
             {"mc_error", c.feasible ? num(c.mc_error) : Json(nullptr)}};
    if (!c.note.empty()) row["note"] = c.note;
    rows.push_back(row);
  }
  return Json{{"axes", ax}, {"cells", rows}};
}

void write_grid_csv(std::ostream& out, std::span<const AxisSpec> axes,
                    std::span<const GridCell> cells) {
  for (const auto& a : axes) out << to_string(a.axis) << ',';
  out << "power,mc_error,feasible,note\n";
  const auto old = out.precision(10);
  for (const auto& c : cells) {
    for (double v : c.coords) out << v << ',';
    if (c.feasible) out << c.power << ',' << c.mc_error << ",1,";
    else out << "NA,NA,0,";
    std::string note = c.note;
    for (char& ch : note) if (ch == ',' || ch == '\n') ch = ';';
    out << note << '\n';
  }
  out.precision(old);
}

void write_outcomes_csv(std::ostream& out, const SimulationReport& r) {
  out << "index,status,used,rejected,statistic,iterations,loglik_ascent";
  const int k = r.outcomes.empty() ? 0 : static_cast<int>(r.outcomes.front().beta_hat.size());
  for (int j = 0; j < k; ++j) out << ",beta" << j + 1;
  for (int j = 0; j < k; ++j) out << ",se_beta" << j + 1;
  out << '\n';
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& o : r.outcomes) {
    out << o.index << ',' << to_string(o.status) << ',' << o.used << ',' << o.rejected << ','
        << o.statistic << ',' << o.iterations << ',' << o.loglik_ascent;
    for (Eigen::Index j = 0; j < o.beta_hat.size(); ++j) out << ',' << o.beta_hat[j];
    for (Eigen::Index j = 0; j < o.se_beta.size(); ++j) out << ',' << o.se_beta[j];
    out << '\n';
  }
  out.precision(old);
}

std::vector<double> parse_axis_values(const std::string& text) {
  auto to_double = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      bad("axis", "bad number '" + s + "' in '" + text + "'");
    }
    if (used != s.size() || !std::isfinite(v)) bad("axis", "bad number '" + s + "' in '" + text + "'");
    return v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::stringstream ss(text);
    std::string lo, hi, count;
    std::getline(ss, lo, ':');
    std::getline(ss, hi, ':');
    std::getline(ss, count);
    const double a = to_double(lo);
    const double b = to_double(hi);
    const double c = to_double(count);
    if (c < 1 || c != std::floor(c)) bad("axis", "count must be a positive integer in '" + text + "'");
    const int n = static_cast<int>(c);
    if (n == 1 && a != b) bad("axis", "a one-point range needs lo == hi in '" + text + "'");
    const Vector v = Vector::LinSpaced(n, a, b);
    out.assign(v.data(), v.data() + n);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(item));
  if (out.empty()) bad("axis", "no values in '" + text + "'");
  return out;
}

AxisSpec parse_axis_flag(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) bad("axis", "expected name=values, got '" + text + "'");
  return AxisSpec{parse_grid_axis(text.substr(0, eq)), parse_axis_values(text.substr(eq + 1))};
}

}  // namespace cocrt
