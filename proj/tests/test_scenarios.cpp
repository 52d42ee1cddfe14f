#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "polyobs/errors.hpp"
#include "polyobs/scenarios.hpp"

using namespace polyobs;

TEST_CASE("input signal formula") {
  InputLaw law{50.0, 1.0, 0.1};
  CHECK(input_signal(law, 0.0) == 0.0);
  CHECK(input_signal(law, M_PI / 2.0) ==
        doctest::Approx(42.73179995766167).epsilon(1e-12));
  // Decay: the envelope shrinks by e^-lambda per unit time.
  InputLaw flat{10.0, 2.0, 0.0};
  CHECK(input_signal(flat, 1.0) == doctest::Approx(10.0 * std::sin(2.0)));
}

TEST_CASE("default scenario boxes match the benchmark setups") {
  SystemModel etc = make_etc();
  ScenarioSetConfig ce = default_scenario_config(etc, 99);
  CHECK(ce.n_sc == 100);
  CHECK(ce.t_f == 3.0);
  CHECK(ce.seed == 99);
  CHECK(ce.x_min.minCoeff() == -0.5);
  CHECK(ce.x_max.maxCoeff() == 0.5);

  SystemModel lz = make_lorentz();
  ScenarioSetConfig cl = default_scenario_config(lz, 99);
  CHECK(cl.n_sc == 250);
  CHECK(cl.t_f == 4.0);
  CHECK(cl.x_min.minCoeff() == -1.0);
  CHECK(cl.x_max.maxCoeff() == 1.0);
}

TEST_CASE("parameter dispersion is relative and centered") {
  Eigen::VectorXd nominal(3);
  nominal << 10.0, 28.0, 3.34;

  Rng rng(11);
  Eigen::VectorXd p0 = sample_parameters(rng, nominal, 0.0);
  CHECK((p0 - nominal).norm() == 0.0);  // sigma_p = 0 keeps the nominal exactly

  Rng rng2(11);
  Eigen::MatrixXd draws(3, 4000);
  for (int i = 0; i < draws.cols(); ++i)
    draws.col(i) = sample_parameters(rng2, nominal, 0.05);
  for (int j = 0; j < 3; ++j) {
    double mean = draws.row(j).mean();
    double sd = std::sqrt((draws.row(j).array() - mean).square().mean());
    CHECK(mean == doctest::Approx(nominal[j]).epsilon(0.01));
    CHECK(sd / nominal[j] == doctest::Approx(0.05).epsilon(0.1));
  }
}

TEST_CASE("scenario draws stay inside the configured box") {
  SystemModel lz = make_lorentz();
  ScenarioSetConfig cfg = default_scenario_config(lz, 20240801ULL);
  cfg.sigma_p = 0.1;
  std::vector<Scenario> set = generate_scenario_set(lz, cfg);
  REQUIRE(static_cast<int>(set.size()) == cfg.n_sc);
  for (const Scenario& sc : set) {
    for (int j = 0; j < 3; ++j) {
      CHECK(sc.x0[j] >= cfg.x_min[j]);
      CHECK(sc.x0[j] < cfg.x_max[j]);
    }
    CHECK(!sc.input_law.has_value());
    REQUIRE(sc.p.size() == 3);
  }
}

TEST_CASE("throttle scenarios carry an input law inside its ranges") {
  SystemModel etc = make_etc();
  ScenarioSetConfig cfg = default_scenario_config(etc, 20240801ULL);
  std::vector<Scenario> set = generate_scenario_set(etc, cfg);
  for (const Scenario& sc : set) {
    REQUIRE(sc.input_law.has_value());
    CHECK(sc.input_law->u0 >= -50.0);
    CHECK(sc.input_law->u0 < 50.0);
    CHECK(sc.input_law->omega >= 1.0);
    CHECK(sc.input_law->omega < 10.0);
    CHECK(sc.input_law->lambda >= 0.1);
    CHECK(sc.input_law->lambda < 1.0);
  }
}

TEST_CASE("scenario i is a pure function of seed and index") {
  SystemModel etc = make_etc();
  ScenarioSetConfig small = default_scenario_config(etc, 77);
  ScenarioSetConfig large = small;
  small.n_sc = 10;
  large.n_sc = 40;
  small.sigma_p = large.sigma_p = 0.05;

  std::vector<Scenario> a = generate_scenario_set(etc, small);
  std::vector<Scenario> b = generate_scenario_set(etc, large);
  for (int i = 0; i < small.n_sc; ++i) {
    CHECK((a[i].x0 - b[i].x0).norm() == 0.0);
    CHECK((a[i].p - b[i].p).norm() == 0.0);
    CHECK(a[i].input_law->u0 == b[i].input_law->u0);
    CHECK(a[i].input_law->omega == b[i].input_law->omega);
    CHECK(a[i].input_law->lambda == b[i].input_law->lambda);
  }

  // A different seed reshuffles everything.
  ScenarioSetConfig other = small;
  other.seed = 78;
  std::vector<Scenario> c = generate_scenario_set(etc, other);
  CHECK((a[0].x0 - c[0].x0).norm() > 0.0);
}

TEST_CASE("scenarios differ from each other") {
  SystemModel lz = make_lorentz();
  ScenarioSetConfig cfg = default_scenario_config(lz, 5);
  cfg.n_sc = 50;
  std::vector<Scenario> set = generate_scenario_set(lz, cfg);
  for (int i = 1; i < 50; ++i)
    CHECK((set[i].x0 - set[i - 1].x0).norm() > 0.0);
}

TEST_CASE("generation validates its configuration") {
  SystemModel lz = make_lorentz();
  ScenarioSetConfig cfg = default_scenario_config(lz, 1);
  cfg.n_sc = 1;
  CHECK_THROWS_AS(generate_scenario_set(lz, cfg), ConfigError);
  cfg.n_sc = 4;
  cfg.t_f = 0.0305;  // not a multiple of tau = 1e-2
  CHECK_THROWS_AS(generate_scenario_set(lz, cfg), ConfigError);
  cfg.t_f = 1.0;
  cfg.x_min.resize(2);
  CHECK_THROWS_AS(generate_scenario_set(lz, cfg), ConfigError);
}

TEST_CASE("audit file lists every scenario with full precision") {
  SystemModel etc = make_etc();
  ScenarioSetConfig cfg = default_scenario_config(etc, 31);
  cfg.n_sc = 3;
  cfg.sigma_p = 0.05;
  std::vector<Scenario> set = generate_scenario_set(etc, cfg);

  std::filesystem::path path =
      std::filesystem::temp_directory_path() / "polyobs_scenarios_test.txt";
  write_scenario_set(set, path.string());

  std::ifstream f(path);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  std::string text = ss.str();
  CHECK(text.find("scenario 0") != std::string::npos);
  CHECK(text.find("scenario 2") != std::string::npos);
  CHECK(text.find("law ") != std::string::npos);

  char expect[64];
  std::snprintf(expect, sizeof expect, "%.17g", set[1].x0[0]);
  CHECK(text.find(expect) != std::string::npos);
  std::filesystem::remove(path);
}
