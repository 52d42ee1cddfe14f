#include "polyobs/scenarios.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "polyobs/errors.hpp"

namespace polyobs {

double input_signal(const InputLaw& law, double t) {
  return law.u0 * std::sin(law.omega * t) * std::exp(-law.lambda * t);
}

ScenarioSetConfig default_scenario_config(const SystemModel& model,
                                          std::uint64_t seed) {
  ScenarioSetConfig cfg;
  cfg.seed = seed;
  cfg.x_min.resize(model.n_x);
  cfg.x_max.resize(model.n_x);
  if (model.kind == SystemKind::Etc) {
    cfg.n_sc = 100;
    cfg.t_f = 3.0;
    cfg.x_min.setConstant(-0.5);
    cfg.x_max.setConstant(0.5);
  } else {
    cfg.n_sc = 250;
    cfg.t_f = 4.0;
    cfg.x_min.setConstant(-1.0);
    cfg.x_max.setConstant(1.0);
  }
  return cfg;
}

Eigen::VectorXd sample_parameters(Rng& rng, const Eigen::VectorXd& p_nominal,
                                  double sigma_p) {
  Eigen::VectorXd p(p_nominal.size());
  for (Eigen::Index i = 0; i < p.size(); ++i)
    p[i] = p_nominal[i] * (1.0 + sigma_p * rng.gaussian());
  return p;
}

namespace {

// Fixed draw order per scenario: initial state, then (throttle only) the
// input-law triplet, then the dispersed parameters. Changing this order
// changes every dataset, so it is part of the reproducibility contract.
Scenario build_scenario(const SystemModel& model, const ScenarioSetConfig& cfg,
                        int id) {
  Rng rng = derive_stream(cfg.seed, kScenario, static_cast<std::uint64_t>(id));
  Scenario sc;
  sc.scenario_id = id;
  sc.x0.resize(model.n_x);
  for (int j = 0; j < model.n_x; ++j)
    sc.x0[j] = rng.uniform(cfg.x_min[j], cfg.x_max[j]);
  if (model.kind == SystemKind::Etc) {
    InputLaw law;
    law.u0 = rng.uniform(-50.0, 50.0);
    law.omega = rng.uniform(1.0, 10.0);
    law.lambda = rng.uniform(0.1, 1.0);
    sc.input_law = law;
  }
  sc.p = sample_parameters(rng, model.p_nominal, cfg.sigma_p);
  return sc;
}

}  // namespace

std::vector<Scenario> generate_scenario_set(const SystemModel& model,
                                            const ScenarioSetConfig& cfg) {
  if (cfg.n_sc < 2)
    throw ConfigError("n_sc must be >= 2 (the split needs both halves)");
  if (cfg.x_min.size() != model.n_x || cfg.x_max.size() != model.n_x)
    throw ConfigError("scenario box does not match the state dimension");
  double steps = cfg.t_f / model.tau;
  if (std::abs(steps - std::llround(steps)) > 1e-9)
    throw ConfigError("t_f must be an integer multiple of the sampling period");

  std::vector<Scenario> out;
  out.reserve(cfg.n_sc);
  for (int i = 0; i < cfg.n_sc; ++i) out.push_back(build_scenario(model, cfg, i));
  return out;
}

void write_scenario_set(const std::vector<Scenario>& scenarios,
                        const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path + " for writing");
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    f << buf;
  };
  for (const auto& sc : scenarios) {
    f << "scenario " << sc.scenario_id << "\n  x0";
    for (Eigen::Index j = 0; j < sc.x0.size(); ++j) { f << ' '; put(sc.x0[j]); }
    if (sc.input_law) {
      f << "\n  law ";
      put(sc.input_law->u0); f << ' ';
      put(sc.input_law->omega); f << ' ';
      put(sc.input_law->lambda);
    }
    f << "\n  p";
    for (Eigen::Index j = 0; j < sc.p.size(); ++j) { f << ' '; put(sc.p[j]); }
    f << "\n";
  }
  if (!f) throw Error("failed while writing " + path);
}

}  // namespace polyobs
