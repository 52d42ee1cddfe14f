#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "polyobs/rng.hpp"
#include "polyobs/systems.hpp"

namespace polyobs {

// Decaying sinusoid u(t) = u0 * sin(omega t) * exp(-lambda t).
struct InputLaw {
  double u0 = 0.0;
  double omega = 1.0;
  double lambda = 0.1;
};

double input_signal(const InputLaw& law, double t);

struct Scenario {
  Eigen::VectorXd x0;
  std::optional<InputLaw> input_law;  // engaged for the throttle only
  Eigen::VectorXd p;
  int scenario_id = 0;
};

struct ScenarioSetConfig {
  int n_sc = 2;
  double t_f = 1.0;
  double sigma_p = 0.0;       // relative dispersion of the physical parameters
  Eigen::VectorXd x_min;
  Eigen::VectorXd x_max;
  std::uint64_t seed = 0;
};

ScenarioSetConfig default_scenario_config(const SystemModel& model,
                                          std::uint64_t seed);

// p_i = nominal_i * (1 + sigma_p * eta_i), eta i.i.d. standard normal.
Eigen::VectorXd sample_parameters(Rng& rng, const Eigen::VectorXd& p_nominal,
                                  double sigma_p);

// Scenario i is a pure function of (config.seed, i): its substream is derived
// from those two alone, so sets of different sizes agree on shared indices.
std::vector<Scenario> generate_scenario_set(const SystemModel& model,
                                            const ScenarioSetConfig& config);

// One record per scenario (id, x0, law, p) for audit.
void write_scenario_set(const std::vector<Scenario>& scenarios,
                        const std::string& path);

}  // namespace polyobs
