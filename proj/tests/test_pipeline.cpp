#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "polyobs/errors.hpp"
#include "polyobs/pipeline.hpp"

using namespace polyobs;
namespace fs = std::filesystem;

namespace {

// Small enough to run in seconds, large enough for every stage to have work.
ExperimentConfig tiny_lorentz() {
  ExperimentConfig cfg;
  cfg.system = SystemKind::Lorentz;
  cfg.n_sc = 6;
  cfg.t_f = 0.5;  // 50 steps, 11 windows per scenario
  cfg.keep_every = 4;
  cfg.seed = 424242ULL;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("defaults follow the benchmark table") {
  ExperimentConfig etc = default_config(SystemKind::Etc);
  CHECK(etc.n_sc == 100);
  CHECK(etc.t_f == 3.0);
  CHECK(etc.N == 15);
  CHECK(etc.m == 2);
  ExperimentConfig lz = default_config(SystemKind::Lorentz);
  CHECK(lz.n_sc == 250);
  CHECK(lz.t_f == 4.0);
  CHECK(lz.N == 5);
  CHECK(lz.m == 10);
}

TEST_CASE("zero-valued scenario fields resolve to the system defaults") {
  ExperimentConfig cfg;
  cfg.system = SystemKind::Lorentz;
  ExperimentConfig r = resolve_config(cfg);
  CHECK(r.n_sc == 250);
  CHECK(r.t_f == 4.0);
  CHECK(r.N == 5);
  CHECK(r.m == 10);
  // Pinned values survive resolution.
  cfg.n_sc = 12;
  cfg.t_f = 1.0;
  CHECK(resolve_config(cfg).n_sc == 12);
  CHECK(resolve_config(cfg).t_f == 1.0);
}

TEST_CASE("resolution names the offending field") {
  ExperimentConfig cfg = tiny_lorentz();
  cfg.target_id = 5;
  try {
    resolve_config(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("target") != std::string::npos);
  }

  auto expect_throw = [](ExperimentConfig bad) {
    CHECK_THROWS_AS(resolve_config(bad), ConfigError);
  };
  ExperimentConfig bad = tiny_lorentz();
  bad.sigma_p = -0.1;
  expect_throw(bad);
  bad = tiny_lorentz();
  bad.noise = -1.0;
  expect_throw(bad);
  bad = tiny_lorentz();
  bad.n_sc = 1;
  expect_throw(bad);
  bad = tiny_lorentz();
  bad.method = "forest";
  expect_throw(bad);
  bad = tiny_lorentz();
  bad.keep_every = 0;
  expect_throw(bad);
  bad = tiny_lorentz();
  bad.plars.degree_grid.clear();
  expect_throw(bad);
  bad = tiny_lorentz();
  bad.t_f = 0.505;  // not a multiple of tau = 1e-2
  expect_throw(bad);
  bad = tiny_lorentz();
  bad.t_f = 0.3;  // 30 steps cannot hold a (5, 10) window
  expect_throw(bad);
  bad = tiny_lorentz();
  bad.jobs = 0;
  expect_throw(bad);
}

TEST_CASE("json config covers every tunable and rejects strangers") {
  ExperimentConfig cfg;
  apply_json_config(cfg, R"({
    "system": "lorentz", "target": 2, "sigma_p": 0.05, "noise": 0.025,
    "seed": 99, "n_sc": 10, "t_f": 1.0, "N": 5, "m": 10,
    "method": "both", "degree_grid": [1, 3], "window": 100,
    "per_window_pick": 2, "passes": 7, "stop_tol": 0.001, "patience": 9,
    "max_active": 50, "degree_band": 0.5, "keep_every": 10,
    "knn_grid": [1, 5], "out": "somewhere", "jobs": 2
  })");
  CHECK(cfg.system == SystemKind::Lorentz);
  CHECK(cfg.target_id == 2);
  CHECK(cfg.sigma_p == 0.05);
  CHECK(cfg.noise == 0.025);
  CHECK(cfg.seed == 99);
  CHECK(cfg.n_sc == 10);
  CHECK(cfg.t_f == 1.0);
  CHECK(cfg.method == "both");
  CHECK(cfg.plars.degree_grid == std::vector<int>{1, 3});
  CHECK(cfg.plars.window_w == 100);
  CHECK(cfg.plars.per_window_pick == 2);
  CHECK(cfg.plars.passes == 7);
  CHECK(cfg.plars.stop_tol == 0.001);
  CHECK(cfg.plars.patience == 9);
  CHECK(cfg.plars.max_active == 50);
  CHECK(cfg.plars.degree_band == 0.5);
  CHECK(cfg.keep_every == 10);
  CHECK(cfg.knn_grid == std::vector<int>{1, 5});
  CHECK(cfg.out_dir == "somewhere");
  CHECK(cfg.jobs == 2);

  CHECK_THROWS_AS(apply_json_config(cfg, R"({"sigma": 1})"), ConfigError);
  CHECK_THROWS_AS(apply_json_config(cfg, "not json"), ConfigError);
  CHECK_THROWS_AS(apply_json_config(cfg, "[1,2]"), ConfigError);
}

TEST_CASE("the config echo excludes paths and round-trips") {
  ExperimentConfig cfg = tiny_lorentz();
  cfg.out_dir = "should-not-appear";
  cfg.jobs = 7;
  std::string echo = config_to_json(resolve_config(cfg));
  CHECK(echo.find("should-not-appear") == std::string::npos);
  CHECK(echo.find("jobs") == std::string::npos);

  ExperimentConfig back;
  apply_json_config(back, echo);
  CHECK(config_to_json(resolve_config(back)) == echo);
}

TEST_CASE("cell preparation shapes and noise policy") {
  ExperimentConfig cfg = tiny_lorentz();
  CellData clean = prepare_cell(cfg);

  // 6 scenarios, 11 windows each: 3 scenarios per side, keep_every 4 puts
  // ceil(33/4) = 9 rows into the fit subset.
  CHECK(clean.fit_X.rows() == 9);
  CHECK(clean.val_X.rows() == 24);
  CHECK(clean.test_X.rows() == 33);
  CHECK(clean.fit_X.cols() == 5);  // N * n_y
  CHECK(clean.meta.system == "lorentz");
  CHECK(clean.meta.N == 5);
  CHECK(clean.meta.m == 10);
  CHECK(clean.meta.seed == cfg.seed);
  CHECK(clean.meta.noise_level == 0.0);
  CHECK(clean.meta.dropped_scenarios == 0);

  // Standardization is fit on the fit subset alone.
  CHECK(clean.fit_X.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);

  ExperimentConfig noisy_cfg = cfg;
  noisy_cfg.noise = 0.1;
  CellData noisy = prepare_cell(noisy_cfg);
  // Labels and the scaler never see noise; features do.
  CHECK((noisy.fit_y - clean.fit_y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((noisy.val_y - clean.val_y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((noisy.test_y - clean.test_y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((noisy.scaler.means - clean.scaler.means).cwiseAbs().maxCoeff() == 0.0);
  CHECK((noisy.scaler.stds - clean.scaler.stds).cwiseAbs().maxCoeff() == 0.0);
  CHECK((noisy.fit_X - clean.fit_X).cwiseAbs().maxCoeff() > 0.01);
  CHECK((noisy.val_X - clean.val_X).cwiseAbs().maxCoeff() > 0.01);
  CHECK((noisy.test_X - clean.test_X).cwiseAbs().maxCoeff() > 0.01);
  CHECK(noisy.meta.noise_level == 0.1);

  // The three blocks draw from independent substreams: the fit block's
  // perturbation must not repeat at the start of the validation block.
  Eigen::MatrixXd d_fit = noisy.fit_X - clean.fit_X;
  Eigen::MatrixXd d_val = noisy.val_X - clean.val_X;
  CHECK((d_fit.row(0) - d_val.row(0)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("preparation is deterministic and seed-sensitive") {
  ExperimentConfig cfg = tiny_lorentz();
  cfg.noise = 0.05;
  cfg.sigma_p = 0.05;
  CellData a = prepare_cell(cfg);
  CellData b = prepare_cell(cfg);
  CHECK((a.fit_X - b.fit_X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.val_X - b.val_X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.test_X - b.test_X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.fit_y - b.fit_y).cwiseAbs().maxCoeff() == 0.0);

  ExperimentConfig other = cfg;
  other.seed = cfg.seed + 1;
  CellData c = prepare_cell(other);
  CHECK((a.fit_X - c.fit_X).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("the etc cell exposes the 30-entry window") {
  ExperimentConfig cfg;
  cfg.system = SystemKind::Etc;
  cfg.n_sc = 2;
  cfg.t_f = 0.1;  // 100 steps, 73 windows per scenario
  cfg.seed = 31337ULL;
  CellData data = prepare_cell(cfg);
  CHECK(data.fit_X.cols() == 30);
  CHECK(data.fit_X.rows() == 4);  // ceil(73/20)
  CHECK(data.val_X.rows() == 69);
  CHECK(data.test_X.rows() == 73);
}

TEST_CASE("generated dataset files feed the fit stage unchanged") {
  TempDir dir("polyobs_test_stage_iso");
  ExperimentConfig cfg = tiny_lorentz();
  cfg.noise = 0.025;
  cfg.sigma_p = 0.05;
  cfg.out_dir = dir.path.string();

  GenerateResult gen = cmd_generate(cfg);
  CHECK(gen.train_rows == 33);
  CHECK(gen.test_rows == 33);
  CHECK(gen.dropped == 0);
  CHECK(fs::exists(gen.train_path));
  CHECK(fs::exists(gen.test_path));
  CHECK(fs::exists(gen.train_path + ".meta.json"));
  CHECK(fs::exists(dir.path / "generate_config.json"));

  // The echoed config parses and reports the resolved scenario count.
  nlohmann::json echo =
      nlohmann::json::parse(slurp(dir.path / "generate_config.json"));
  CHECK(echo.at("n_sc").get<int>() == 6);
  CHECK(echo.at("noise").get<double>() == 0.025);

  CellData via_files = prepare_cell_from_files(gen.train_path, gen.test_path, cfg);
  CellData in_memory = prepare_cell(cfg);
  CHECK((via_files.fit_X - in_memory.fit_X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((via_files.val_X - in_memory.val_X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((via_files.test_X - in_memory.test_X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((via_files.fit_y - in_memory.fit_y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((via_files.test_y - in_memory.test_y).cwiseAbs().maxCoeff() == 0.0);
  CHECK(via_files.meta == in_memory.meta);
}

TEST_CASE("dataset files from different runs cannot be mixed") {
  TempDir dir_a("polyobs_test_mix_a");
  TempDir dir_b("polyobs_test_mix_b");
  ExperimentConfig cfg = tiny_lorentz();
  cfg.out_dir = dir_a.path.string();
  GenerateResult gen_a = cmd_generate(cfg);

  ExperimentConfig cfg_b = cfg;
  cfg_b.seed = cfg.seed + 5;
  cfg_b.out_dir = dir_b.path.string();
  GenerateResult gen_b = cmd_generate(cfg_b);

  CHECK_THROWS_AS(
      prepare_cell_from_files(gen_a.train_path, gen_b.test_path, cfg),
      SchemaError);

  // A config naming the wrong system is rejected up front.
  ExperimentConfig wrong = cfg;
  wrong.system = SystemKind::Etc;
  wrong.t_f = 0.5;  // valid for the throttle's clock as well
  CHECK_THROWS_AS(
      prepare_cell_from_files(gen_a.train_path, gen_a.test_path, wrong),
      SchemaError);
}

TEST_CASE("run_cell honors the method switch") {
  ExperimentConfig cfg = tiny_lorentz();
  cfg.noise = 0.01;

  cfg.method = "plars";
  CellData data = prepare_cell(cfg);
  CellResult r1 = run_cell(cfg, data);
  CHECK(r1.has_plars);
  CHECK(!r1.has_knn);
  CHECK(r1.report.metrics.size() == 1);
  CHECK(r1.report.comparisons.empty());

  cfg.method = "knn";
  CellResult r2 = run_cell(cfg, data);
  CHECK(!r2.has_plars);
  CHECK(r2.has_knn);
  CHECK(r2.report.metrics.size() == 1);
  CHECK(r2.report.metrics[0].algorithm == "knn");
  CHECK(r2.report.comparisons.empty());  // no reference row to compare against

  cfg.method = "both";
  CellResult r3 = run_cell(cfg, data);
  CHECK(r3.has_plars);
  CHECK(r3.has_knn);
  CHECK(r3.report.metrics.size() == 2);
  CHECK(r3.report.comparisons.size() == 4);

  // The same prepared data gives the same numbers on a rerun.
  CellResult r4 = run_cell(cfg, data);
  for (std::size_t i = 0; i < r3.report.metrics.size(); ++i)
    for (std::size_t q = 0; q < 4; ++q)
      CHECK(r3.report.metrics[i].p_q[q] == r4.report.metrics[i].p_q[q]);
}

TEST_CASE("cell outputs are complete and reload exactly") {
  TempDir dir("polyobs_test_outputs");
  ExperimentConfig cfg = tiny_lorentz();
  cfg.method = "both";
  cfg.noise = 0.025;
  CellData data = prepare_cell(cfg);
  CellResult result = run_cell(cfg, data);
  write_cell_outputs(cfg, result, dir.path.string());

  CHECK(fs::exists(dir.path / "report.csv"));
  CHECK(fs::exists(dir.path / "model_knn.json"));

  std::string report = slurp(dir.path / "report.txt");
  CHECK(report.find("# config:") != std::string::npos);
  CHECK(report.find("# plars: degree") != std::string::npos);
  CHECK(report.find("# knn: k") != std::string::npos);
  CHECK(report.find("relative to plars [%]") != std::string::npos);

  // The saved polynomial reproduces the in-memory test predictions bitwise.
  PolynomialModel loaded =
      load_model((dir.path / "model_plars.json").string());
  Eigen::VectorXd from_disk = predict_standardized(loaded, data.test_X);
  Eigen::VectorXd in_memory =
      predict_standardized(result.plars.model, data.test_X);
  CHECK((from_disk - in_memory).cwiseAbs().maxCoeff() == 0.0);

  // The nearest-neighbor file records the choice, not the data.
  nlohmann::json kj = nlohmann::json::parse(slurp(dir.path / "model_knn.json"));
  CHECK(kj.at("format") == "polyobs-knn-v1");
  CHECK(kj.at("k").get<int>() == result.knn.k);
  CHECK(kj.at("rows").get<int>() == static_cast<int>(data.fit_X.rows()));
  CHECK(!kj.contains("features"));
  CHECK(kj.at("provenance").contains("config"));
}

TEST_CASE("the reproduction grid is byte-stable across runs") {
  TempDir dir_a("polyobs_test_grid_a");
  TempDir dir_b("polyobs_test_grid_b");

  // A scale every cell of both systems accepts: 0.8 s is a multiple of both
  // sampling periods and holds both window shapes.
  ExperimentConfig base;
  base.n_sc = 4;
  base.t_f = 0.8;
  base.seed = 777ULL;
  base.method = "both";

  int fail_a = reproduce_grid(base, dir_a.path.string(), 1);
  int fail_b = reproduce_grid(base, dir_b.path.string(), 1);
  CHECK(fail_a == 0);
  CHECK(fail_b == 0);

  CHECK(slurp(dir_a.path / "summary.txt") == slurp(dir_b.path / "summary.txt"));
  CHECK(slurp(dir_a.path / "summary.csv") == slurp(dir_b.path / "summary.csv"));

  const fs::path cell = "etc_z1_sp0.00_n0.000";
  CHECK(fs::exists(dir_a.path / cell / "report.txt"));
  CHECK(slurp(dir_a.path / cell / "model_plars.json") ==
        slurp(dir_b.path / cell / "model_plars.json"));

  std::string csv = slurp(dir_a.path / "summary.csv");
  CHECK(csv.find("etc_z1_sp0.00_n0.000,etc,1,") != std::string::npos);
  CHECK(csv.find(",ok") != std::string::npos);
}
