#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "polyobs/errors.hpp"
#include "polyobs/pipeline.hpp"

namespace fs = std::filesystem;
using namespace polyobs;

namespace {

std::string default_out_root() {
  if (const char* env = std::getenv("POLYOBS_OUT_ROOT"); env && *env)
    return env;
  return "polyobs_out";
}

std::vector<int> parse_int_list(const std::string& text, const char* flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string(flag) + ": expected a comma-separated " +
                        "integer list, got '" + text + "'");
    }
  }
  if (out.empty())
    throw ConfigError(std::string(flag) + ": empty list");
  return out;
}

// Flags shared by the pipeline subcommands. Values are applied over the
// config-file keys only when the user actually passed the flag.
struct CommonFlags {
  std::string config_path;
  std::string system = "etc";
  int target = 1;
  double sigma_p = 0.0;
  double noise = 0.0;
  std::uint64_t seed = 20240801ULL;
  int n_sc = 0;
  double t_f = 0.0;
  std::string method = "plars";
  std::string degree_grid = "1,3,5";
  int window = 200;
  int keep_every = 20;
  int jobs = 1;
  std::string out;

  CLI::Option* o_system = nullptr;
  CLI::Option* o_target = nullptr;
  CLI::Option* o_sigma = nullptr;
  CLI::Option* o_noise = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_n_sc = nullptr;
  CLI::Option* o_t_f = nullptr;
  CLI::Option* o_method = nullptr;
  CLI::Option* o_grid = nullptr;
  CLI::Option* o_window = nullptr;
  CLI::Option* o_keep = nullptr;
  CLI::Option* o_jobs = nullptr;
  CLI::Option* o_out = nullptr;

  void attach(CLI::App* app, bool with_system = true) {
    app->add_option("--config", config_path,
                    "JSON config file; flags override its keys");
    if (with_system)
      o_system = app->add_option("--system", system, "etc or lorentz");
    o_target = app->add_option("--target", target, "observation target: 1 or 2");
    o_sigma = app->add_option("--sigma-p", sigma_p,
                              "relative parameter dispersion");
    o_noise = app->add_option("--noise", noise,
                              "measurement noise std on standardized features");
    o_seed = app->add_option("--seed", seed, "master RNG seed");
    o_n_sc = app->add_option("--n-sc", n_sc, "scenario count (0: system default)");
    o_t_f = app->add_option("--t-f", t_f, "horizon seconds (0: system default)");
    o_method = app->add_option("--method", method, "plars, knn or both");
    o_grid = app->add_option("--degree-grid", degree_grid,
                             "candidate degrees, e.g. 1,3,5");
    o_window = app->add_option("--window", window,
                               "monomial selection window length");
    o_keep = app->add_option("--keep-every", keep_every,
                             "train-row stride kept for the fit set");
    o_jobs = app->add_option("--jobs", jobs, "parallel cells in reproduce");
    o_out = app->add_option("--out", out, "output directory");
  }

  ExperimentConfig build() const {
    ExperimentConfig cfg;
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw ConfigError("cannot open config file " + config_path);
      std::stringstream ss;
      ss << f.rdbuf();
      apply_json_config(cfg, ss.str());
    }
    if (o_system && o_system->count()) cfg.system = parse_system_kind(system);
    if (o_target->count()) cfg.target_id = target;
    if (o_sigma->count()) cfg.sigma_p = sigma_p;
    if (o_noise->count()) cfg.noise = noise;
    if (o_seed->count()) cfg.seed = seed;
    if (o_n_sc->count()) cfg.n_sc = n_sc;
    if (o_t_f->count()) cfg.t_f = t_f;
    if (o_method->count()) cfg.method = method;
    if (o_grid->count())
      cfg.plars.degree_grid = parse_int_list(degree_grid, "--degree-grid");
    if (o_window->count()) cfg.plars.window_w = window;
    if (o_keep->count()) cfg.keep_every = keep_every;
    if (o_jobs->count()) cfg.jobs = jobs;
    if (o_out->count()) cfg.out_dir = out;
    return cfg;
  }
};

int do_generate(const CommonFlags& flags) {
  ExperimentConfig cfg = flags.build();
  if (cfg.out_dir.empty())
    cfg.out_dir = (fs::path(default_out_root()) / "data").string();
  GenerateResult res = cmd_generate(cfg);
  std::printf("wrote %s (%ld rows) and %s (%ld rows), %d scenario(s) dropped\n",
              res.train_path.c_str(), res.train_rows, res.test_path.c_str(),
              res.test_rows, res.dropped);
  return 0;
}

// The dataset sidecar pins system, target, window shape, noise policy and
// seed; config flags keep only the fitting knobs. The sidecar's n_sc counts
// one split half, so the experiment-level scenario count and horizon come
// from the generate_config.json that generate drops next to the data.
void adopt_sidecar(ExperimentConfig& cfg, const std::string& train_path) {
  std::ifstream mf(train_path + ".meta.json");
  if (!mf)
    throw ConfigError("cannot open " + train_path + ".meta.json " +
                      "(run generate first)");
  nlohmann::json mj;
  try {
    mf >> mj;
    cfg.system = parse_system_kind(mj.at("system").get<std::string>());
    cfg.target_id = mj.at("target_id").get<int>();
    cfg.sigma_p = mj.at("sigma_p").get<double>();
    cfg.noise = mj.at("noise_level").get<double>();
    cfg.seed = mj.at("seed").get<std::uint64_t>();
    cfg.N = mj.at("N").get<int>();
    cfg.m = mj.at("m").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("bad metadata sidecar for " + train_path + ": " +
                      e.what());
  }
  std::ifstream gf(fs::path(train_path).parent_path() / "generate_config.json");
  if (gf) {
    nlohmann::json gj;
    try {
      gf >> gj;
      cfg.n_sc = gj.at("n_sc").get<int>();
      cfg.t_f = gj.at("t_f").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("bad generate_config.json next to " + train_path +
                        ": " + e.what());
    }
  }
}

int do_fit(const std::string& data_dir, const CommonFlags& flags) {
  ExperimentConfig cfg = flags.build();
  const std::string train = (fs::path(data_dir) / "train.csv").string();
  const std::string test = (fs::path(data_dir) / "test.csv").string();
  if (!fs::exists(train))
    throw ConfigError("dataset file not found: " + train);
  if (!fs::exists(test))
    throw ConfigError("dataset file not found: " + test);
  adopt_sidecar(cfg, train);

  CellData data = prepare_cell_from_files(train, test, cfg);
  CellResult result = run_cell(cfg, data);
  const std::string out =
      cfg.out_dir.empty() ? data_dir : cfg.out_dir;
  write_cell_outputs(cfg, result, out);
  if (result.has_plars)
    std::printf("plars: degree %d, %d active monomials (%.1fs) -> %s\n",
                result.plars.degree,
                result.plars.per_degree.at(result.plars.degree).active_count,
                result.seconds_plars,
                (fs::path(out) / "model_plars.json").string().c_str());
  if (result.has_knn)
    std::printf("knn: k=%d (%.1fs) -> %s\n", result.knn.k, result.seconds_knn,
                (fs::path(out) / "model_knn.json").string().c_str());
  return 0;
}

int do_evaluate(const std::string& data_dir, const std::string& models_dir,
                const CommonFlags& flags) {
  ExperimentConfig cfg = flags.build();
  const std::string train = (fs::path(data_dir) / "train.csv").string();
  const std::string test = (fs::path(data_dir) / "test.csv").string();
  for (const std::string& p : {train, test})
    if (!fs::exists(p)) throw ConfigError("dataset file not found: " + p);
  adopt_sidecar(cfg, train);

  const std::string plars_path =
      (fs::path(models_dir) / "model_plars.json").string();
  const std::string knn_path =
      (fs::path(models_dir) / "model_knn.json").string();
  const bool have_plars = fs::exists(plars_path);
  const bool have_knn = fs::exists(knn_path);
  if (!have_plars && !have_knn)
    throw ConfigError("model file not found: " + plars_path + " (nor " +
                      knn_path + ")");

  CellData data = prepare_cell_from_files(train, test, cfg);
  std::vector<std::string> algorithms;
  std::vector<Eigen::VectorXd> predictions;
  if (have_plars) {
    PolynomialModel model = load_model(plars_path);
    if (model.powers.n_xi != data.test_X.cols())
      throw SchemaError("model and dataset feature dimensions disagree");
    algorithms.push_back("plars");
    predictions.push_back(predict_standardized(model, data.test_X));
  }
  if (have_knn) {
    std::ifstream f(knn_path);
    nlohmann::json kj;
    f >> kj;
    if (kj.value("format", "") != "polyobs-knn-v1")
      throw SchemaError(knn_path + ": not a knn model file");
    KnnModel knn = make_knn(data.fit_X, data.fit_y, kj.at("k").get<int>());
    algorithms.push_back("knn");
    predictions.push_back(knn_predict(knn, data.test_X));
  }

  Report report = build_report(algorithms, predictions, data.test_y,
                               data.meta.system, data.meta.target_id,
                               data.meta.sigma_p, data.meta.noise_level);
  cfg.method = (have_plars && have_knn) ? "both" : algorithms.front();
  const std::string echo = config_to_json(resolve_config(cfg));
  const std::string out = cfg.out_dir.empty() ? models_dir : cfg.out_dir;
  fs::create_directories(out);
  {
    std::ofstream f(fs::path(out) / "report.txt");
    f << "# config: " << echo << "\n" << render_report_text(report);
  }
  {
    std::ofstream f(fs::path(out) / "report.csv");
    f << "# config: " << echo << "\n" << render_report_csv(report);
  }
  std::fputs(render_report_text(report).c_str(), stdout);
  return 0;
}

int do_reproduce(const CommonFlags& flags, int cells) {
  ExperimentConfig base = flags.build();
  if (!flags.o_method->count() && flags.config_path.empty())
    base.method = "both";
  const std::string out_root =
      base.out_dir.empty() ? (fs::path(default_out_root()) / "grid").string()
                           : base.out_dir;
  const int failures = reproduce_grid(base, out_root, cells);
  std::printf("summary: %s\n", (fs::path(out_root) / "summary.txt").c_str());
  if (failures > 0) {
    std::fprintf(stderr, "%d cell(s) failed\n", failures);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "polyobs: window-to-target estimators for uncertain nonlinear systems"};
  app.require_subcommand(1);

  CommonFlags gen_flags, fit_flags, eval_flags, rep_flags;
  std::string fit_data, eval_data, eval_models;
  int rep_cells = 0;

  CLI::App* c_gen =
      app.add_subcommand("generate", "simulate scenarios and write datasets");
  gen_flags.attach(c_gen);

  CLI::App* c_fit = app.add_subcommand("fit", "fit models on a dataset");
  fit_flags.attach(c_fit, false);
  c_fit->add_option("--data", fit_data, "directory holding train.csv/test.csv")
      ->required();

  CLI::App* c_eval =
      app.add_subcommand("evaluate", "evaluate saved models on the test set");
  eval_flags.attach(c_eval, false);
  c_eval->add_option("--data", eval_data, "directory holding train.csv/test.csv")
      ->required();
  c_eval->add_option("--models", eval_models, "directory holding model files")
      ->required();

  CLI::App* c_rep = app.add_subcommand(
      "reproduce", "run the full sigma_p x noise grid for both systems");
  rep_flags.attach(c_rep, false);
  c_rep->add_option("--cells", rep_cells,
                    "run only the first n grid cells (0: all 18)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (c_gen->parsed()) return do_generate(gen_flags);
    if (c_fit->parsed()) return do_fit(fit_data, fit_flags);
    if (c_eval->parsed()) return do_evaluate(eval_data, eval_models, eval_flags);
    if (c_rep->parsed()) return do_reproduce(rep_flags, rep_cells);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
