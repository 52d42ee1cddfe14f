#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "polyobs/rng.hpp"
#include "polyobs/scenarios.hpp"
#include "polyobs/systems.hpp"

namespace polyobs {

// N measurement blocks spaced m sampling periods apart; a feature row has
// n_xi = N * n_y entries and spans N_O = N*m periods of history.
struct WindowConfig {
  int N = 1;
  int m = 1;
};

struct DatasetMeta {
  std::string system;
  int target_id = 1;
  double sigma_p = 0.0;
  double noise_level = 0.0;  // configured level; stored features stay clean
  int N = 1;
  int m = 1;
  double tau = 0.0;
  int n_sc = 0;
  int dropped_scenarios = 0;
  std::uint64_t seed = 0;

  bool operator==(const DatasetMeta&) const = default;
};

struct WindowedDataset {
  Eigen::MatrixXd features;       // n_s x n_xi, raw (unscaled, noiseless)
  Eigen::VectorXd labels;         // n_s
  std::vector<int> scenario_ids;  // n_s, non-decreasing
  std::vector<int> k_index;       // right-end time index of each window
  DatasetMeta meta;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index cols() const { return features.cols(); }
};

struct WindowBatch {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  std::vector<int> k_index;
  bool too_short = false;
};

// Rows for every k in {(N-1)m, ..., M}, newest measurement block first:
// xi_k = [y_k; y_{k-m}; ...; y_{k-(N-1)m}], label z_k. A trajectory shorter
// than one window yields an empty batch with too_short set.
WindowBatch build_windows(const Trajectory& traj, const WindowConfig& cfg,
                          int target_id);

// Concatenates per-scenario windows in scenario order. Diverged scenarios
// (flagged by a negative scenario_id slot in `diverged`) are dropped and
// counted in meta.
WindowedDataset assemble_dataset(const SystemModel& model,
                                 const std::vector<Scenario>& scenarios,
                                 const std::vector<Trajectory>& trajectories,
                                 const std::vector<bool>& diverged,
                                 const WindowConfig& cfg, int target_id,
                                 double sigma_p);

// First ceil(n_sc/2) scenarios go to train, the rest to test. No sample
// shuffling; the split happens on scenario boundaries only.
struct SplitResult {
  WindowedDataset train;
  WindowedDataset test;
};
SplitResult split_by_scenario(const WindowedDataset& ds);

// Rows 0, keep_every, 2*keep_every, ... of the train set.
WindowedDataset subsample_fit_set(const WindowedDataset& train, int keep_every);

// Complement of subsample_fit_set over the same train set.
WindowedDataset validation_rest(const WindowedDataset& train, int keep_every);

struct Scaler {
  Eigen::VectorXd means;
  Eigen::VectorXd stds;  // population stds, floored: below 1e-12 becomes 1
};

Scaler fit_scaler(const Eigen::MatrixXd& rows);
Eigen::MatrixXd apply_scaler(const Scaler& s, const Eigen::MatrixXd& rows);
Eigen::VectorXd apply_scaler(const Scaler& s, const Eigen::VectorXd& row);
Eigen::MatrixXd invert_scaler(const Scaler& s, const Eigen::MatrixXd& rows);

// Adds i.i.d. Gaussian(0, level^2) to every entry. Labels are never touched.
Eigen::MatrixXd add_noise(const Eigen::MatrixXd& standardized, double level,
                          Rng& rng);

// CSV with header f0,...,f{n-1},label,scenario_id,k at full round-trip
// precision, plus a <path>.meta.json sidecar.
void export_dataset(const WindowedDataset& ds, const std::string& path);
WindowedDataset import_dataset(const std::string& path);

}  // namespace polyobs
