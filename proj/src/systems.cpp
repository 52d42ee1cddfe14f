#include "polyobs/systems.hpp"

#include <cmath>

#include "polyobs/errors.hpp"
#include "polyobs/scenarios.hpp"

namespace polyobs {

namespace {
// Parameter slots of the throttle vector.
enum EtcParam { kNm, kJm, kJg, kBm, kBt, kKsp, kKt, kRp, kRaf, kLa, kKb, kRa, kPatm };
}  // namespace

SystemModel make_etc(double p_atm) {
  SystemModel model;
  model.kind = SystemKind::Etc;
  model.n_x = 3;
  model.n_u = 1;
  model.n_p = 13;
  model.n_y = 2;
  model.p_nominal.resize(13);
  model.p_nominal << 4.0, 0.0004, 0.005, 0.03, 3.4e-3, 0.4316, 0.1045, 0.0015,
      0.002, 0.003, 0.1051, 1.9, p_atm;
  model.tau = 1e-3;
  return model;
}

SystemModel make_lorentz() {
  SystemModel model;
  model.kind = SystemKind::Lorentz;
  model.n_x = 3;
  model.n_u = 0;
  model.n_p = 3;
  model.n_y = 1;
  model.p_nominal.resize(3);
  model.p_nominal << 10.0, 28.0, 3.34;
  model.tau = 1e-2;
  return model;
}

SystemModel make_system(SystemKind kind) {
  return kind == SystemKind::Etc ? make_etc() : make_lorentz();
}

SystemKind parse_system_kind(const std::string& name) {
  if (name == "etc") return SystemKind::Etc;
  if (name == "lorentz") return SystemKind::Lorentz;
  throw ConfigError("unknown system '" + name + "' (expected etc or lorentz)");
}

std::string system_name(SystemKind kind) {
  return kind == SystemKind::Etc ? "etc" : "lorentz";
}

double etc_phi(const Eigen::VectorXd& x, const Eigen::VectorXd& p) {
  double c = std::cos(x[0]);
  return -p[kKsp] * (x[0] - M_PI / 2.0)
         - (p[kNm] * p[kNm] * p[kBm] + p[kBt]) * x[1]
         - 2.0 * p[kPatm] * (M_PI - x[0]) * p[kRp] * p[kRp] * p[kRaf] * c * c;
}

Eigen::VectorXd rhs(const SystemModel& model, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u, const Eigen::VectorXd& p) {
  if (x.size() != model.n_x || u.size() != model.n_u || p.size() != model.n_p)
    throw ConfigError("rhs: dimension mismatch for system " +
                      system_name(model.kind));
  Eigen::VectorXd dx(3);
  if (model.kind == SystemKind::Etc) {
    dx[0] = x[1];
    dx[1] = (etc_phi(x, p) + p[kNm] * p[kKt] * x[2]) /
            (p[kNm] * p[kNm] * p[kJm] + p[kJg]);
    dx[2] = (-p[kNm] * p[kKb] * x[1] - p[kRa] * x[2] + u[0]) / p[kLa];
  } else {
    dx[0] = p[0] * (x[1] - x[0]);
    dx[1] = x[0] * (p[1] - x[2]) - x[1];
    dx[2] = x[0] * x[1] - p[2] * x[2];
  }
  return dx;
}

Eigen::VectorXd measure(const SystemModel& model, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& u) {
  if (model.kind == SystemKind::Etc) {
    Eigen::VectorXd y(2);
    y << x[0], u[0];
    return y;
  }
  Eigen::VectorXd y(1);
  y << x[0];
  return y;
}

double target(const SystemModel&, const Eigen::VectorXd& x, int which) {
  if (which == 1) return x[1];
  if (which == 2) return x[2];
  throw ConfigError("target: which must be 1 or 2, got " +
                    std::to_string(which));
}

Eigen::VectorXd rk4_step(const RhsFn& derivative, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, const Eigen::VectorXd& p,
                         double tau) {
  Eigen::VectorXd k1 = derivative(x, u, p);
  Eigen::VectorXd k2 = derivative(x + 0.5 * tau * k1, u, p);
  Eigen::VectorXd k3 = derivative(x + 0.5 * tau * k2, u, p);
  Eigen::VectorXd k4 = derivative(x + tau * k3, u, p);
  Eigen::VectorXd next = x + (tau / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite())
    throw SimulationDiverged("rk4_step produced a non-finite state", 0);
  return next;
}

Trajectory simulate(const SystemModel& model, const Scenario& scenario, int M) {
  if (scenario.x0.size() != model.n_x || scenario.p.size() != model.n_p)
    throw ConfigError("simulate: scenario dimensions do not match the model");
  if (M < 1) throw ConfigError("simulate: M must be >= 1");
  if (model.n_u > 0 && !scenario.input_law)
    throw ConfigError("simulate: system needs an input law");

  Trajectory traj;
  traj.times.resize(M + 1);
  traj.states.resize(M + 1, model.n_x);
  traj.inputs.resize(M + 1, model.n_u);
  traj.measurements.resize(M + 1, model.n_y);
  traj.targets.resize(M + 1, 2);

  auto f = [&model](const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                    const Eigen::VectorXd& p) { return rhs(model, x, u, p); };

  Eigen::VectorXd x = scenario.x0;
  for (int k = 0; k <= M; ++k) {
    double t = k * model.tau;
    Eigen::VectorXd u(model.n_u);
    if (model.n_u > 0) u[0] = input_signal(*scenario.input_law, t);

    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e6)
      throw SimulationDiverged(
          "scenario " + std::to_string(scenario.scenario_id) +
              " diverged at step " + std::to_string(k),
          static_cast<std::size_t>(k));

    traj.times[k] = t;
    traj.states.row(k) = x;
    traj.inputs.row(k) = u;
    traj.measurements.row(k) = measure(model, x, u);
    traj.targets(k, 0) = target(model, x, 1);
    traj.targets(k, 1) = target(model, x, 2);

    if (k < M) x = rk4_step(f, x, u, scenario.p, model.tau);
  }
  return traj;
}

}  // namespace polyobs
