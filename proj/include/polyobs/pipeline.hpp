#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "polyobs/baselines.hpp"
#include "polyobs/dataset.hpp"
#include "polyobs/evalkit.hpp"
#include "polyobs/polyfit.hpp"
#include "polyobs/scenarios.hpp"
#include "polyobs/systems.hpp"

namespace polyobs {

// Everything one experiment cell needs, resolved and validated up front.
struct ExperimentConfig {
  SystemKind system = SystemKind::Etc;
  int target_id = 1;
  double sigma_p = 0.0;
  double noise = 0.0;
  std::uint64_t seed = 20240801ULL;

  int n_sc = 0;     // 0 means: take the system default
  double t_f = 0.0; // 0 means: take the system default
  int N = 0;
  int m = 0;

  std::string method = "plars";  // plars | knn | both
  PlarsConfig plars;
  std::vector<int> knn_grid{1, 3, 5, 10};
  int keep_every = 20;

  std::string out_dir;
  int jobs = 1;
};

// Table-backed defaults: throttle runs 100 scenarios over 3 s with N=15,
// m=2; Lorentz runs 250 scenarios over 4 s with N=5, m=10.
ExperimentConfig default_config(SystemKind system);

// Fills the zero-valued scenario/window fields from the system defaults and
// checks every precondition; throws ConfigError naming the offending field.
ExperimentConfig resolve_config(ExperimentConfig cfg);

// Applies keys from a JSON config file; unknown keys are rejected.
void apply_json_config(ExperimentConfig& cfg, const std::string& json_text);
std::string config_to_json(const ExperimentConfig& cfg);

// Standardized (and, when configured, noise-injected) matrices for one cell.
// Labels stay clean throughout.
struct CellData {
  DatasetMeta meta;
  Scaler scaler;
  Eigen::MatrixXd fit_X;
  Eigen::VectorXd fit_y;
  Eigen::MatrixXd val_X;
  Eigen::VectorXd val_y;
  Eigen::MatrixXd test_X;
  Eigen::VectorXd test_y;
};

// generate -> windows -> scenario split -> fit subsample -> scaler -> noise,
// entirely in memory.
CellData prepare_cell(const ExperimentConfig& cfg);

// Same preparation starting from exported train/test dataset files.
CellData prepare_cell_from_files(const std::string& train_path,
                                 const std::string& test_path,
                                 const ExperimentConfig& cfg);

// Simulates the configured scenario set and writes train/test dataset files
// (raw, noiseless features) plus sidecars into out_dir.
struct GenerateResult {
  std::string train_path;
  std::string test_path;
  long train_rows = 0;
  long test_rows = 0;
  int dropped = 0;
};
GenerateResult cmd_generate(const ExperimentConfig& cfg);

struct CellResult {
  DegreeSelection plars;
  bool has_plars = false;
  KnnSelection knn;
  int knn_rows = 0;
  bool has_knn = false;
  Report report;
  double seconds_plars = 0.0;
  double seconds_knn = 0.0;
};

// Full in-memory cell: prepare, fit the configured methods, evaluate on the
// test block. Does not touch the filesystem.
CellResult run_cell(const ExperimentConfig& cfg, const CellData& data);
CellResult run_cell(const ExperimentConfig& cfg);

// Writes report.txt / report.csv / model files for a finished cell.
void write_cell_outputs(const ExperimentConfig& cfg, const CellResult& result,
                        const std::string& dir);

// The full sigma_p x noise grid for both systems (z = x2), each cell in its
// own subdirectory, parallel up to cfg.jobs. cells_limit > 0 truncates the
// grid (smoke mode). Returns the number of failed cells; the summary files
// are written either way and are byte-stable for a fixed seed.
int reproduce_grid(const ExperimentConfig& base, const std::string& out_root,
                   int cells_limit = 0);

}  // namespace polyobs
