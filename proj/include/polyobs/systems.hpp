#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace polyobs {

enum class SystemKind { Etc, Lorentz };

// One of the two benchmark plants. Parameter vectors passed to rhs() must
// have n_p entries in the same order as p_nominal.
struct SystemModel {
  SystemKind kind;
  int n_x;
  int n_u;
  int n_p;
  int n_y;
  Eigen::VectorXd p_nominal;
  double tau;  // sampling period, seconds
};

// Electronic throttle: x = (theta, theta_dot, e_a), y = (theta, u).
// Parameter order: N_m, J_m, J_g, b_m, b_t, K_sp, K_t, R_p, R_af, L_a,
// K_b, R_a, P_atm. P_atm is not part of the published constants; standard
// atmosphere is used and kept configurable like the rest.
SystemModel make_etc(double p_atm = 101325.0);

// Lorentz system with y = x1, nominal p = (10, 28, 3.34).
SystemModel make_lorentz();

SystemModel make_system(SystemKind kind);
SystemKind parse_system_kind(const std::string& name);
std::string system_name(SystemKind kind);

// Spring/friction/airflow torque entering the throttle's second equation.
double etc_phi(const Eigen::VectorXd& x, const Eigen::VectorXd& p);

Eigen::VectorXd rhs(const SystemModel& model, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u, const Eigen::VectorXd& p);

Eigen::VectorXd measure(const SystemModel& model, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& u);

// which=1 -> x2, which=2 -> x3 (both systems).
double target(const SystemModel& model, const Eigen::VectorXd& x, int which);

// Classical RK4 with the input held constant over the step.
using RhsFn = std::function<Eigen::VectorXd(
    const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::VectorXd&)>;
Eigen::VectorXd rk4_step(const RhsFn& derivative, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, const Eigen::VectorXd& p,
                         double tau);

struct Trajectory {
  Eigen::VectorXd times;        // M+1, t_k = k*tau
  Eigen::MatrixXd states;       // (M+1) x n_x
  Eigen::MatrixXd inputs;       // (M+1) x n_u
  Eigen::MatrixXd measurements; // (M+1) x n_y
  Eigen::MatrixXd targets;      // (M+1) x 2, columns z1=x2, z2=x3
};

struct Scenario;  // defined in scenarios.hpp

// Integrates M steps from the scenario's initial state. Throws
// SimulationDiverged (with the offending step) if any |state| exceeds 1e6
// or a non-finite value appears.
Trajectory simulate(const SystemModel& model, const Scenario& scenario, int M);

}  // namespace polyobs
