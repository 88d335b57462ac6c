#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cocrt/error.hpp"
#include "cocrt/scenario.hpp"

using namespace cocrt;

namespace {

Json base() {
  return Json::parse(R"({
    "model": {"rho0": [0.05, 0.1], "rho1": 0.03, "rho2": 0.3, "sigma_y2": [1, 4]},
    "effect": {"beta": [0.3, 0.5]},
    "design": {"n": 20, "m_bar": 30, "cv": 0.2, "z_bar": 0.5, "alpha": 0.05},
    "test": {"kind": "omnibus"}
  })");
}

std::string error_text(const Json& doc) {
  try {
    parse_scenario(doc);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
    return e.what();
  }
  FAIL("expected InvalidArgument");
  return {};
}

bool mentions(const std::string& text, const std::string& what) {
  return text.find(what) != std::string::npos;
}

}  // namespace

TEST_CASE("icc model") {
  const Scenario sc = parse_scenario(base());
  REQUIRE(sc.icc);
  CHECK(sc.k() == 2);
  CHECK(sc.vc.sigma_phi()(0, 0) == doctest::Approx(0.05));
  CHECK(sc.vc.sigma_phi()(1, 1) == doctest::Approx(0.4));
  CHECK(sc.vc.sigma_phi()(0, 1) == doctest::Approx(0.03 * 2.0));
  CHECK(sc.vc.sigma_e()(0, 1) == doctest::Approx(0.27 * 2.0));
  CHECK(sc.has_n);
  CHECK(sc.has_m_bar);
  CHECK(sc.test.kind == TestKind::Omnibus);
  REQUIRE(sc.test.beta);
  CHECK(*sc.test.beta == sc.effect.beta);
  CHECK(sc.effect.gamma.isZero());
  CHECK(sc.solver.power.iu_kind == MvtKind::Noncentral);
}

TEST_CASE("component model and its round trip") {
  Json doc = base();
  doc["model"] = Json::parse(R"({"sigma_phi": [[8.3, 9.1], [9.1, 11.2]],
                                  "sigma_e": [[170, 94.2], [94.2, 84.8]]})");
  doc["effect"] = Json::parse(R"({"beta_sd": 0.3})");
  const Scenario sc = parse_scenario(doc);
  CHECK_FALSE(sc.icc);
  CHECK(sc.effect.beta[0] == doctest::Approx(0.3 * std::sqrt(178.3)));
  CHECK(sc.effect.beta[1] == doctest::Approx(0.3 * std::sqrt(96.0)));

  const Json out = to_json(sc);
  CHECK(out["model"].contains("rho0"));
  CHECK(out["model"].contains("sigma_phi"));
  CHECK(out["test"]["kind"] == "omnibus");
  CHECK(out["iu"]["distribution"] == "noncentral");

  // The resolved form parses back to the same scenario once one model form is kept.
  Json again = out;
  again["model"].erase("rho0");
  again["model"].erase("rho1");
  again["model"].erase("rho2");
  again["model"].erase("sigma_y2");
  again["test"].erase("contrast");
  again["test"].erase("delta");
  const Scenario back = parse_scenario(again);
  CHECK((back.vc.sigma_phi() - sc.vc.sigma_phi()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.effect.beta - sc.effect.beta).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(back.design.n == sc.design.n);
}

TEST_CASE("rho0 ranges and scalar expansion") {
  Json doc = base();
  doc["model"]["rho0"] = Json::parse(R"({"from": 0.01, "to": 0.1})");
  const Scenario sc = parse_scenario(doc);
  CHECK(sc.icc->rho0()[0] == doctest::Approx(0.01));
  CHECK(sc.icc->rho0()[1] == doctest::Approx(0.1));

  doc["model"] = Json::parse(R"({"k": 3, "rho0": 0.05, "rho1": 0.01, "rho2": 0.2, "sigma_y2": 1})");
  doc["effect"]["beta"] = 0.2;
  const Scenario three = parse_scenario(doc);
  CHECK(three.k() == 3);
  CHECK(three.effect.beta.size() == 3);
}

TEST_CASE("validation errors name the field") {
  Json doc = base();
  doc["model"]["sigma_phi"] = Json::parse("[[1]]");
  CHECK(mentions(error_text(doc), "model"));

  doc = base();
  doc["design"]["m"] = 10;
  CHECK(mentions(error_text(doc), "design.m"));

  doc = base();
  doc["extra"] = true;
  CHECK(mentions(error_text(doc), "extra"));

  doc = base();
  doc["effect"]["beta_sd"] = 0.2;
  CHECK(mentions(error_text(doc), "effect"));

  doc = base();
  doc["effect"]["beta"] = Json::parse("[0.1, 0.2, 0.3]");
  CHECK(mentions(error_text(doc), "effect.beta"));

  doc = base();
  doc["solver"] = Json::parse(R"({"solve": "k"})");
  CHECK(mentions(error_text(doc), "solver.solve"));

  doc = base();
  doc["iu"] = Json::parse(R"({"distribution": "cauchy"})");
  CHECK(mentions(error_text(doc), "iu"));

  doc = base();
  doc.erase("model");
  CHECK(mentions(error_text(doc), "model"));
}

TEST_CASE("indefinite icc sets are not validation errors") {
  Json doc = base();
  doc["model"]["rho1"] = 0.5;
  try {
    parse_scenario(doc);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotPositiveDefinite);
  }
}

TEST_CASE("axis values") {
  const auto a = parse_axis_values("0.01:0.09:9");
  REQUIRE(a.size() == 9);
  CHECK(a.front() == doctest::Approx(0.01));
  CHECK(a[4] == doctest::Approx(0.05));
  CHECK(a.back() == doctest::Approx(0.09));
  CHECK(parse_axis_values("0.4,0.79") == std::vector<double>{0.4, 0.79});
  CHECK(parse_axis_values("0.5") == std::vector<double>{0.5});
  CHECK_THROWS_AS(parse_axis_values("0.1:0.2"), Error);
  CHECK_THROWS_AS(parse_axis_values("a,b"), Error);
  CHECK_THROWS_AS(parse_axis_values(""), Error);

  const auto spec = parse_axis_flag("rho1_ratio=0.1:1.5:15");
  CHECK(spec.axis == GridAxis::Rho1Ratio);
  CHECK(spec.values.size() == 15);
  CHECK_THROWS_AS(parse_axis_flag("rho3=0.1"), Error);
  CHECK_THROWS_AS(parse_axis_flag("rho0"), Error);
}

TEST_CASE("grid csv marks infeasible cells") {
  const std::vector<AxisSpec> axes{{GridAxis::Rho2, {0.2, 0.9}}};
  std::vector<GridCell> cells(2);
  cells[0] = {{0.2}, true, 0.8125, 0.0001, ""};
  cells[1] = {{0.9}, false, 0.0, 0.0, "Sigma_e is not positive definite"};
  std::ostringstream out;
  write_grid_csv(out, axes, cells);
  const std::string text = out.str();
  CHECK(text.rfind("rho2,power,mc_error,feasible,note\n", 0) == 0);
  CHECK(mentions(text, "0.8125"));
  CHECK(mentions(text, "NA"));

  const Json j = to_json(axes, cells);
  CHECK(j["cells"].size() == 2);
  CHECK(j["cells"][1]["power"].is_null());
}

TEST_CASE("numbers that are not finite serialize as null") {
  PowerResult r;
  r.power = 0.5;
  r.mc_error = std::nan("");
  const Json j = to_json(r);
  CHECK(j["mc_error"].is_null());
  CHECK(j["noncentrality"].is_null());
  CHECK(j["power"] == 0.5);
}
