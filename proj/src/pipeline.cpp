#include "polyobs/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "polyobs/errors.hpp"

namespace polyobs {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentConfig default_config(SystemKind system) {
  ExperimentConfig cfg;
  cfg.system = system;
  if (system == SystemKind::Etc) {
    cfg.n_sc = 100;
    cfg.t_f = 3.0;
    cfg.N = 15;
    cfg.m = 2;
  } else {
    cfg.n_sc = 250;
    cfg.t_f = 4.0;
    cfg.N = 5;
    cfg.m = 10;
  }
  return cfg;
}

ExperimentConfig resolve_config(ExperimentConfig cfg) {
  const ExperimentConfig defaults = default_config(cfg.system);
  if (cfg.n_sc == 0) cfg.n_sc = defaults.n_sc;
  if (cfg.t_f == 0.0) cfg.t_f = defaults.t_f;
  if (cfg.N == 0) cfg.N = defaults.N;
  if (cfg.m == 0) cfg.m = defaults.m;

  if (cfg.target_id != 1 && cfg.target_id != 2)
    throw ConfigError("config field target: must be 1 or 2");
  if (cfg.sigma_p < 0) throw ConfigError("config field sigma_p: must be >= 0");
  if (cfg.noise < 0) throw ConfigError("config field noise: must be >= 0");
  if (cfg.n_sc < 2) throw ConfigError("config field n_sc: must be >= 2");
  if (cfg.t_f <= 0) throw ConfigError("config field t_f: must be > 0");
  if (cfg.N < 1) throw ConfigError("config field N: must be >= 1");
  if (cfg.m < 1) throw ConfigError("config field m: must be >= 1");
  if (cfg.keep_every < 1)
    throw ConfigError("config field keep_every: must be >= 1");
  if (cfg.method != "plars" && cfg.method != "knn" && cfg.method != "both")
    throw ConfigError("config field method: expected plars, knn or both");
  if (cfg.plars.degree_grid.empty())
    throw ConfigError("config field degree_grid: must be non-empty");
  for (int d : cfg.plars.degree_grid)
    if (d < 0) throw ConfigError("config field degree_grid: degrees must be >= 0");
  if (cfg.plars.window_w < 1)
    throw ConfigError("config field window: must be >= 1");
  if (cfg.knn_grid.empty())
    throw ConfigError("config field knn_grid: must be non-empty");
  if (cfg.jobs < 1) throw ConfigError("config field jobs: must be >= 1");

  const SystemModel model = make_system(cfg.system);
  const double steps = cfg.t_f / model.tau;
  if (std::abs(steps - std::llround(steps)) > 1e-9)
    throw ConfigError("config field t_f: must be a multiple of the sampling period");
  const long M = std::llround(steps);
  if (M < static_cast<long>(cfg.N - 1) * cfg.m)
    throw ConfigError("config field t_f: horizon shorter than one window");
  return cfg;
}

void apply_json_config(ExperimentConfig& cfg, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "system")
      cfg.system = parse_system_kind(value.get<std::string>());
    else if (key == "target")
      cfg.target_id = value.get<int>();
    else if (key == "sigma_p")
      cfg.sigma_p = value.get<double>();
    else if (key == "noise")
      cfg.noise = value.get<double>();
    else if (key == "seed")
      cfg.seed = value.get<std::uint64_t>();
    else if (key == "n_sc")
      cfg.n_sc = value.get<int>();
    else if (key == "t_f")
      cfg.t_f = value.get<double>();
    else if (key == "N")
      cfg.N = value.get<int>();
    else if (key == "m")
      cfg.m = value.get<int>();
    else if (key == "method")
      cfg.method = value.get<std::string>();
    else if (key == "degree_grid")
      cfg.plars.degree_grid = value.get<std::vector<int>>();
    else if (key == "window")
      cfg.plars.window_w = value.get<int>();
    else if (key == "per_window_pick")
      cfg.plars.per_window_pick = value.get<int>();
    else if (key == "passes")
      cfg.plars.passes = value.get<int>();
    else if (key == "stop_tol")
      cfg.plars.stop_tol = value.get<double>();
    else if (key == "patience")
      cfg.plars.patience = value.get<int>();
    else if (key == "max_active")
      cfg.plars.max_active = value.get<int>();
    else if (key == "degree_band")
      cfg.plars.degree_band = value.get<double>();
    else if (key == "keep_every")
      cfg.keep_every = value.get<int>();
    else if (key == "knn_grid")
      cfg.knn_grid = value.get<std::vector<int>>();
    else if (key == "out")
      cfg.out_dir = value.get<std::string>();
    else if (key == "jobs")
      cfg.jobs = value.get<int>();
    else
      throw ConfigError("unknown config key '" + key + "'");
  }
}

// Echo of every field that influences the produced numbers. Output paths and
// the job count are deliberately absent so artifacts stay byte-stable.
std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["system"] = system_name(cfg.system);
  j["target"] = cfg.target_id;
  j["sigma_p"] = cfg.sigma_p;
  j["noise"] = cfg.noise;
  j["seed"] = cfg.seed;
  j["n_sc"] = cfg.n_sc;
  j["t_f"] = cfg.t_f;
  j["N"] = cfg.N;
  j["m"] = cfg.m;
  j["method"] = cfg.method;
  j["degree_grid"] = cfg.plars.degree_grid;
  j["window"] = cfg.plars.window_w;
  j["per_window_pick"] = cfg.plars.per_window_pick;
  j["passes"] = cfg.plars.passes;
  j["stop_tol"] = cfg.plars.stop_tol;
  j["patience"] = cfg.plars.patience;
  j["max_active"] = cfg.plars.max_active;
  j["degree_band"] = cfg.plars.degree_band;
  j["keep_every"] = cfg.keep_every;
  j["knn_grid"] = cfg.knn_grid;
  return j.dump();
}

namespace {

struct RawSplit {
  WindowedDataset train;
  WindowedDataset test;
};

RawSplit generate_split(const ExperimentConfig& cfg) {
  const SystemModel model = make_system(cfg.system);
  ScenarioSetConfig sc_cfg = default_scenario_config(model, cfg.seed);
  sc_cfg.n_sc = cfg.n_sc;
  sc_cfg.t_f = cfg.t_f;
  sc_cfg.sigma_p = cfg.sigma_p;

  const std::vector<Scenario> scenarios = generate_scenario_set(model, sc_cfg);
  const int M = static_cast<int>(std::llround(cfg.t_f / model.tau));

  std::vector<Trajectory> trajectories(scenarios.size());
  std::vector<bool> diverged(scenarios.size(), false);
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    try {
      trajectories[i] = simulate(model, scenarios[i], M);
    } catch (const SimulationDiverged&) {
      diverged[i] = true;
    }
  }

  WindowConfig wcfg{cfg.N, cfg.m};
  WindowedDataset ds = assemble_dataset(model, scenarios, trajectories,
                                        diverged, wcfg, cfg.target_id,
                                        cfg.sigma_p);
  ds.meta.noise_level = cfg.noise;
  ds.meta.seed = cfg.seed;

  SplitResult split = split_by_scenario(ds);
  return {std::move(split.train), std::move(split.test)};
}

CellData finalize_cell(const WindowedDataset& train, const WindowedDataset& test,
                       const ExperimentConfig& cfg) {
  WindowedDataset fit = subsample_fit_set(train, cfg.keep_every);
  WindowedDataset val = validation_rest(train, cfg.keep_every);
  if (val.rows() == 0)
    throw ConfigError("keep_every leaves no validation rows");

  CellData data;
  data.meta = train.meta;
  // The dataset files are authoritative for the noise policy; the recorded
  // level and seed drive all three substreams.
  const double level = train.meta.noise_level;
  const std::uint64_t seed = train.meta.seed;

  data.scaler = fit_scaler(fit.features);  // noiseless fit rows only
  Rng rng_fit = derive_stream(seed, kNoiseFit, 0);
  Rng rng_val = derive_stream(seed, kNoiseVal, 0);
  Rng rng_test = derive_stream(seed, kNoiseTest, 0);
  data.fit_X = add_noise(apply_scaler(data.scaler, fit.features), level, rng_fit);
  data.val_X = add_noise(apply_scaler(data.scaler, val.features), level, rng_val);
  data.test_X =
      add_noise(apply_scaler(data.scaler, test.features), level, rng_test);
  data.fit_y = fit.labels;
  data.val_y = val.labels;
  data.test_y = test.labels;
  return data;
}

}  // namespace

CellData prepare_cell(const ExperimentConfig& cfg_in) {
  const ExperimentConfig cfg = resolve_config(cfg_in);
  RawSplit split = generate_split(cfg);
  return finalize_cell(split.train, split.test, cfg);
}

CellData prepare_cell_from_files(const std::string& train_path,
                                 const std::string& test_path,
                                 const ExperimentConfig& cfg_in) {
  const ExperimentConfig cfg = resolve_config(cfg_in);
  WindowedDataset train = import_dataset(train_path);
  WindowedDataset test = import_dataset(test_path);
  if (train.meta.system != test.meta.system ||
      train.meta.target_id != test.meta.target_id ||
      train.meta.N != test.meta.N || train.meta.m != test.meta.m ||
      train.meta.seed != test.meta.seed)
    throw SchemaError("train and test datasets disagree on their metadata");
  if (train.meta.system != system_name(cfg.system))
    throw SchemaError("dataset holds system " + train.meta.system +
                      ", config asks for " + system_name(cfg.system));
  return finalize_cell(train, test, cfg);
}

GenerateResult cmd_generate(const ExperimentConfig& cfg_in) {
  const ExperimentConfig cfg = resolve_config(cfg_in);
  if (cfg.out_dir.empty()) throw ConfigError("config field out: missing");
  fs::create_directories(cfg.out_dir);

  RawSplit split = generate_split(cfg);
  GenerateResult res;
  res.train_path = (fs::path(cfg.out_dir) / "train.csv").string();
  res.test_path = (fs::path(cfg.out_dir) / "test.csv").string();
  res.train_rows = split.train.rows();
  res.test_rows = split.test.rows();
  res.dropped = split.train.meta.dropped_scenarios;
  export_dataset(split.train, res.train_path);
  export_dataset(split.test, res.test_path);

  std::ofstream cf(fs::path(cfg.out_dir) / "generate_config.json");
  cf << config_to_json(cfg) << "\n";
  return res;
}

CellResult run_cell(const ExperimentConfig& cfg_in, const CellData& data) {
  const ExperimentConfig cfg = resolve_config(cfg_in);
  CellResult result;
  using clock = std::chrono::steady_clock;

  std::vector<std::string> algorithms;
  std::vector<Eigen::VectorXd> predictions;

  if (cfg.method == "plars" || cfg.method == "both") {
    const auto t0 = clock::now();
    result.plars = select_hyperparameters(data.fit_X, data.fit_y, data.val_X,
                                          data.val_y, cfg.plars, data.scaler);
    result.seconds_plars =
        std::chrono::duration<double>(clock::now() - t0).count();
    result.has_plars = true;
    algorithms.push_back("plars");
    predictions.push_back(predict_standardized(result.plars.model, data.test_X));
  }
  if (cfg.method == "knn" || cfg.method == "both") {
    const auto t0 = clock::now();
    result.knn = select_knn(data.fit_X, data.fit_y, data.val_X, data.val_y,
                            cfg.knn_grid);
    KnnModel knn = make_knn(data.fit_X, data.fit_y, result.knn.k);
    result.knn_rows = static_cast<int>(data.fit_X.rows());
    result.seconds_knn =
        std::chrono::duration<double>(clock::now() - t0).count();
    result.has_knn = true;
    algorithms.push_back("knn");
    predictions.push_back(knn_predict(knn, data.test_X));
  }

  result.report = build_report(algorithms, predictions, data.test_y,
                               data.meta.system, data.meta.target_id,
                               data.meta.sigma_p, data.meta.noise_level);
  return result;
}

CellResult run_cell(const ExperimentConfig& cfg) {
  return run_cell(cfg, prepare_cell(cfg));
}

namespace {

json selection_to_json(const CellResult& result) {
  json sel;
  if (result.has_plars) {
    json per;
    for (const auto& [d, diag] : result.plars.per_degree)
      per[std::to_string(d)] = {{"val_mse", diag.val_mse},
                                {"active", diag.active_count},
                                {"picks", diag.picks_total},
                                {"passes", diag.passes_run}};
    sel["plars"] = {{"degree", result.plars.degree}, {"per_degree", per}};
  }
  if (result.has_knn) {
    json grid = json::array();
    for (const auto& [k, mse] : result.knn.val_mse)
      grid.push_back({{"k", k}, {"val_mse", mse}});
    sel["knn"] = {{"k", result.knn.k}, {"grid", grid}};
  }
  return sel;
}

}  // namespace

void write_cell_outputs(const ExperimentConfig& cfg_in, const CellResult& result,
                        const std::string& dir) {
  const ExperimentConfig cfg = resolve_config(cfg_in);
  fs::create_directories(dir);
  const std::string echo = config_to_json(cfg);

  {
    std::ofstream f(fs::path(dir) / "report.txt");
    if (!f) throw Error("cannot write report.txt in " + dir);
    f << "# config: " << echo << "\n";
    if (result.has_plars) {
      f << "# plars: degree " << result.plars.degree;
      for (const auto& [d, diag] : result.plars.per_degree) {
        char buf[128];
        std::snprintf(buf, sizeof buf, " | d=%d val_mse %.6g active %d", d,
                      diag.val_mse, diag.active_count);
        f << buf;
      }
      f << "\n";
    }
    if (result.has_knn) {
      f << "# knn: k " << result.knn.k;
      for (const auto& [k, mse] : result.knn.val_mse) {
        char buf[96];
        std::snprintf(buf, sizeof buf, " | k=%d val_mse %.6g", k, mse);
        f << buf;
      }
      f << "\n";
    }
    f << render_report_text(result.report);
  }
  {
    std::ofstream f(fs::path(dir) / "report.csv");
    if (!f) throw Error("cannot write report.csv in " + dir);
    f << "# config: " << echo << "\n" << render_report_csv(result.report);
  }

  json provenance;
  provenance["config"] = json::parse(echo);
  provenance["selection"] = selection_to_json(result);
  if (result.has_plars)
    save_model(result.plars.model, provenance.dump(),
               (fs::path(dir) / "model_plars.json").string());
  if (result.has_knn) {
    json kj;
    kj["format"] = "polyobs-knn-v1";
    kj["k"] = result.knn.k;
    kj["rows"] = result.knn_rows;
    kj["provenance"] = provenance;
    std::ofstream f(fs::path(dir) / "model_knn.json");
    if (!f) throw Error("cannot write model_knn.json in " + dir);
    f << kj.dump(2) << "\n";
  }
}

namespace {

std::string cell_dir_name(const ExperimentConfig& cfg) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s_z%d_sp%.2f_n%.3f",
                system_name(cfg.system).c_str(), cfg.target_id, cfg.sigma_p,
                cfg.noise);
  return buf;
}

struct CellOutcome {
  std::string name;
  bool failed = false;
  std::string message;
  CellResult result;
};

}  // namespace

int reproduce_grid(const ExperimentConfig& base, const std::string& out_root,
                   int cells_limit) {
  const std::vector<double> sigma_grid{0.0, 0.05, 0.1};
  const std::vector<double> noise_grid{0.0, 0.025, 0.05};

  std::vector<ExperimentConfig> cells;
  for (SystemKind system : {SystemKind::Etc, SystemKind::Lorentz}) {
    for (double sp : sigma_grid) {
      for (double nz : noise_grid) {
        // Scenario scale (n_sc, t_f) follows the base config when pinned
        // there, otherwise each system's defaults; the window shape always
        // comes from the system defaults.
        ExperimentConfig cfg = base;
        cfg.system = system;
        cfg.target_id = 1;
        cfg.sigma_p = sp;
        cfg.noise = nz;
        cfg.N = 0;
        cfg.m = 0;
        cells.push_back(resolve_config(cfg));
      }
    }
  }
  if (cells_limit > 0 && cells_limit < static_cast<int>(cells.size()))
    cells.resize(cells_limit);

  fs::create_directories(out_root);
  std::vector<CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const ExperimentConfig& cfg = cells[i];
      CellOutcome& out = outcomes[i];
      out.name = cell_dir_name(cfg);
      try {
        out.result = run_cell(cfg);
        write_cell_outputs(cfg, out.result,
                           (fs::path(out_root) / out.name).string());
        std::lock_guard<std::mutex> lock(log_mutex);
        std::fprintf(stderr, "[reproduce] %s done (plars %.1fs, knn %.1fs)\n",
                     out.name.c_str(), out.result.seconds_plars,
                     out.result.seconds_knn);
      } catch (const std::exception& e) {
        out.failed = true;
        out.message = e.what();
        std::lock_guard<std::mutex> lock(log_mutex);
        std::fprintf(stderr, "[reproduce] %s FAILED: %s\n", out.name.c_str(),
                     e.what());
      }
    }
  };

  const int jobs = std::max(1, std::min<int>(base.jobs,
                                             static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  int failures = 0;
  {
    std::ofstream f(fs::path(out_root) / "summary.txt");
    if (!f) throw Error("cannot write summary.txt in " + out_root);
    f << "cell                      algorithm  ";
    for (int q : kQuantiles) {
      std::string h = "p" + std::to_string(q);
      f << h << std::string(11 - h.size(), ' ');
    }
    f << "detail\n";
    for (const auto& out : outcomes) {
      if (out.failed) {
        ++failures;
        f << out.name << "  FAILED: " << out.message << "\n";
        continue;
      }
      for (const auto& row : out.result.report.metrics) {
        char head[128];
        std::snprintf(head, sizeof head, "%-24s  %-9s  ", out.name.c_str(),
                      row.algorithm.c_str());
        f << head;
        for (double p : row.p_q) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%-11.6f", p);
          f << buf;
        }
        if (row.algorithm == "plars" && out.result.has_plars) {
          f << "d=" << out.result.plars.degree;
        } else if (row.algorithm == "knn" && out.result.has_knn) {
          f << "k=" << out.result.knn.k;
        }
        f << "\n";
      }
    }
  }
  {
    std::ofstream f(fs::path(out_root) / "summary.csv");
    if (!f) throw Error("cannot write summary.csv in " + out_root);
    f << "cell,system,target,sigma_p,noise,algorithm,q,p_q,vs_plars_pct,"
         "samples,status\n";
    for (const auto& out : outcomes) {
      if (out.failed) {
        f << out.name << ",,,,,,,,,,FAILED\n";
        continue;
      }
      std::istringstream rows(render_report_csv(out.result.report));
      std::string line;
      std::getline(rows, line);  // skip the per-report header
      while (std::getline(rows, line))
        if (!line.empty()) f << out.name << "," << line << ",ok\n";
    }
  }
  return failures;
}

}  // namespace polyobs
