#include "polyobs/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "polyobs/errors.hpp"

namespace polyobs {

WindowBatch build_windows(const Trajectory& traj, const WindowConfig& cfg,
                          int target_id) {
  if (cfg.N < 1 || cfg.m < 1)
    throw ConfigError("window config requires N >= 1 and m >= 1");
  if (target_id != 1 && target_id != 2)
    throw ConfigError("target_id must be 1 or 2");

  const int M = static_cast<int>(traj.states.rows()) - 1;
  const int n_y = static_cast<int>(traj.measurements.cols());
  const int first_k = (cfg.N - 1) * cfg.m;

  WindowBatch batch;
  if (M < first_k) {
    batch.features.resize(0, cfg.N * n_y);
    batch.labels.resize(0);
    batch.too_short = true;
    return batch;
  }

  const int count = M - first_k + 1;
  batch.features.resize(count, cfg.N * n_y);
  batch.labels.resize(count);
  batch.k_index.resize(count);
  for (int i = 0; i < count; ++i) {
    const int k = first_k + i;
    for (int j = 0; j < cfg.N; ++j)  // newest block first
      batch.features.block(i, j * n_y, 1, n_y) =
          traj.measurements.row(k - j * cfg.m);
    batch.labels[i] = traj.targets(k, target_id - 1);
    batch.k_index[i] = k;
  }
  return batch;
}

WindowedDataset assemble_dataset(const SystemModel& model,
                                 const std::vector<Scenario>& scenarios,
                                 const std::vector<Trajectory>& trajectories,
                                 const std::vector<bool>& diverged,
                                 const WindowConfig& cfg, int target_id,
                                 double sigma_p) {
  if (scenarios.size() != trajectories.size() ||
      scenarios.size() != diverged.size())
    throw ConfigError("assemble_dataset: one trajectory per scenario required");

  std::vector<WindowBatch> batches;
  std::vector<int> ids;
  long total = 0;
  int dropped = 0;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (diverged[i]) {
      ++dropped;
      continue;
    }
    WindowBatch b = build_windows(trajectories[i], cfg, target_id);
    total += b.features.rows();
    ids.push_back(scenarios[i].scenario_id);
    batches.push_back(std::move(b));
  }

  WindowedDataset ds;
  ds.features.resize(total, cfg.N * model.n_y);
  ds.labels.resize(total);
  ds.scenario_ids.resize(total);
  ds.k_index.resize(total);
  long row = 0;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto& b = batches[i];
    ds.features.middleRows(row, b.features.rows()) = b.features;
    ds.labels.segment(row, b.labels.size()) = b.labels;
    for (Eigen::Index r = 0; r < b.features.rows(); ++r) {
      ds.scenario_ids[row + r] = ids[i];
      ds.k_index[row + r] = b.k_index[r];
    }
    row += b.features.rows();
  }

  ds.meta.system = system_name(model.kind);
  ds.meta.target_id = target_id;
  ds.meta.sigma_p = sigma_p;
  ds.meta.N = cfg.N;
  ds.meta.m = cfg.m;
  ds.meta.tau = model.tau;
  ds.meta.n_sc = static_cast<int>(scenarios.size()) - dropped;
  ds.meta.dropped_scenarios = dropped;
  return ds;
}

namespace {

WindowedDataset take_rows(const WindowedDataset& ds,
                          const std::vector<long>& rows) {
  WindowedDataset out;
  out.features.resize(rows.size(), ds.features.cols());
  out.labels.resize(rows.size());
  out.scenario_ids.resize(rows.size());
  out.k_index.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(i) = ds.features.row(rows[i]);
    out.labels[i] = ds.labels[rows[i]];
    out.scenario_ids[i] = ds.scenario_ids[rows[i]];
    out.k_index[i] = ds.k_index[rows[i]];
  }
  out.meta = ds.meta;
  return out;
}

}  // namespace

SplitResult split_by_scenario(const WindowedDataset& ds) {
  std::vector<int> distinct;
  for (int id : ds.scenario_ids)
    if (distinct.empty() || distinct.back() != id) distinct.push_back(id);
  if (distinct.size() < 2)
    throw ConfigError("split_by_scenario needs at least 2 scenarios");

  const std::size_t n_train = (distinct.size() + 1) / 2;
  // Scenario ids are non-decreasing, so membership of the first n_train
  // distinct ids is a prefix of the rows.
  std::vector<long> train_rows, test_rows;
  std::size_t pos = 0;
  for (long r = 0; r < ds.rows(); ++r) {
    while (distinct[pos] != ds.scenario_ids[r]) ++pos;
    (pos < n_train ? train_rows : test_rows).push_back(r);
  }
  SplitResult split{take_rows(ds, train_rows), take_rows(ds, test_rows)};
  split.train.meta.n_sc = static_cast<int>(n_train);
  split.test.meta.n_sc = static_cast<int>(distinct.size() - n_train);
  return split;
}

WindowedDataset subsample_fit_set(const WindowedDataset& train,
                                  int keep_every) {
  if (keep_every < 1) throw ConfigError("keep_every must be >= 1");
  std::vector<long> rows;
  for (long r = 0; r < train.rows(); r += keep_every) rows.push_back(r);
  return take_rows(train, rows);
}

WindowedDataset validation_rest(const WindowedDataset& train, int keep_every) {
  if (keep_every < 1) throw ConfigError("keep_every must be >= 1");
  std::vector<long> rows;
  for (long r = 0; r < train.rows(); ++r)
    if (r % keep_every != 0) rows.push_back(r);
  return take_rows(train, rows);
}

Scaler fit_scaler(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2) throw ConfigError("fit_scaler needs at least 2 rows");
  Scaler s;
  s.means = rows.colwise().mean();
  Eigen::ArrayXd var = (rows.rowwise() - s.means.transpose())
                           .array()
                           .square()
                           .colwise()
                           .mean();
  s.stds = var.sqrt().matrix();
  for (Eigen::Index j = 0; j < s.stds.size(); ++j)
    if (s.stds[j] < 1e-12) s.stds[j] = 1.0;
  return s;
}

Eigen::MatrixXd apply_scaler(const Scaler& s, const Eigen::MatrixXd& rows) {
  return (rows.rowwise() - s.means.transpose()).array().rowwise() /
         s.stds.transpose().array();
}

Eigen::VectorXd apply_scaler(const Scaler& s, const Eigen::VectorXd& row) {
  return ((row - s.means).array() / s.stds.array()).matrix();
}

Eigen::MatrixXd invert_scaler(const Scaler& s, const Eigen::MatrixXd& rows) {
  return (rows.array().rowwise() * s.stds.transpose().array()).matrix()
             .rowwise() +
         s.means.transpose();
}

Eigen::MatrixXd add_noise(const Eigen::MatrixXd& standardized, double level,
                          Rng& rng) {
  if (level < 0) throw ConfigError("noise level must be >= 0");
  Eigen::MatrixXd out = standardized;
  if (level == 0.0) return out;
  // Row-major draw order, independent of the matrix storage layout.
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c)
      out(r, c) += level * rng.gaussian();
  return out;
}

namespace {

nlohmann::json meta_to_json(const DatasetMeta& meta, long rows, long cols) {
  return nlohmann::json{{"system", meta.system},
                        {"target_id", meta.target_id},
                        {"sigma_p", meta.sigma_p},
                        {"noise_level", meta.noise_level},
                        {"N", meta.N},
                        {"m", meta.m},
                        {"tau", meta.tau},
                        {"n_sc", meta.n_sc},
                        {"dropped_scenarios", meta.dropped_scenarios},
                        {"seed", meta.seed},
                        {"rows", rows},
                        {"cols", cols}};
}

DatasetMeta meta_from_json(const nlohmann::json& j) {
  DatasetMeta meta;
  meta.system = j.at("system").get<std::string>();
  meta.target_id = j.at("target_id").get<int>();
  meta.sigma_p = j.at("sigma_p").get<double>();
  meta.noise_level = j.at("noise_level").get<double>();
  meta.N = j.at("N").get<int>();
  meta.m = j.at("m").get<int>();
  meta.tau = j.at("tau").get<double>();
  meta.n_sc = j.at("n_sc").get<int>();
  meta.dropped_scenarios = j.at("dropped_scenarios").get<int>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  return meta;
}

}  // namespace

void export_dataset(const WindowedDataset& ds, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open " + path + " for writing");
  const long cols = ds.cols();
  for (long j = 0; j < cols; ++j) std::fprintf(f, "f%ld,", j);
  std::fprintf(f, "label,scenario_id,k\n");
  for (long r = 0; r < ds.rows(); ++r) {
    for (long j = 0; j < cols; ++j)
      std::fprintf(f, "%.17g,", ds.features(r, j));
    std::fprintf(f, "%.17g,%d,%d\n", ds.labels[r], ds.scenario_ids[r],
                 ds.k_index[r]);
  }
  if (std::fclose(f) != 0) throw Error("failed while writing " + path);

  std::ofstream mf(path + ".meta.json");
  if (!mf) throw Error("cannot open " + path + ".meta.json for writing");
  mf << meta_to_json(ds.meta, ds.rows(), ds.cols()).dump(2) << "\n";
}

namespace {

double parse_double(const char* begin, const char* end, std::size_t line) {
  double v;
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ParseError("malformed numeric field '" +
                         std::string(begin, end) + "'",
                     line);
  return v;
}

long parse_long(const char* begin, const char* end, std::size_t line) {
  long v;
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ParseError("malformed integer field '" +
                         std::string(begin, end) + "'",
                     line);
  return v;
}

}  // namespace

WindowedDataset import_dataset(const std::string& path) {
  std::ifstream mf(path + ".meta.json");
  if (!mf) throw Error("cannot open " + path + ".meta.json");
  nlohmann::json mj;
  try {
    mf >> mj;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("bad metadata sidecar for " + path + ": " + e.what());
  }
  DatasetMeta meta = meta_from_json(mj);
  const long meta_rows = mj.at("rows").get<long>();
  const long meta_cols = mj.at("cols").get<long>();

  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  std::string linebuf;
  std::size_t lineno = 1;
  if (!std::getline(f, linebuf)) throw ParseError("missing header", lineno);

  long cols = -1;  // feature columns implied by the header
  {
    long commas = std::count(linebuf.begin(), linebuf.end(), ',');
    cols = commas - 2;
    std::string expected;
    for (long j = 0; j < cols; ++j) expected += "f" + std::to_string(j) + ",";
    expected += "label,scenario_id,k";
    if (cols < 0 || linebuf != expected)
      throw ParseError("unexpected header '" + linebuf + "'", lineno);
  }
  if (cols != meta_cols)
    throw SchemaError(path + ": header has " + std::to_string(cols) +
                      " feature columns, sidecar says " +
                      std::to_string(meta_cols));

  WindowedDataset ds;
  ds.meta = meta;
  ds.features.resize(meta_rows, cols);
  ds.labels.resize(meta_rows);
  ds.scenario_ids.resize(meta_rows);
  ds.k_index.resize(meta_rows);

  long r = 0;
  while (std::getline(f, linebuf)) {
    ++lineno;
    if (linebuf.empty() && f.eof()) break;
    if (r >= meta_rows)
      throw SchemaError(path + ": more data rows than the sidecar's " +
                        std::to_string(meta_rows));
    const char* p = linebuf.data();
    const char* line_end = p + linebuf.size();
    long field = 0;
    while (p <= line_end) {
      const char* q = std::find(p, line_end, ',');
      if (field < cols)
        ds.features(r, field) = parse_double(p, q, lineno);
      else if (field == cols)
        ds.labels[r] = parse_double(p, q, lineno);
      else if (field == cols + 1)
        ds.scenario_ids[r] = static_cast<int>(parse_long(p, q, lineno));
      else if (field == cols + 2)
        ds.k_index[r] = static_cast<int>(parse_long(p, q, lineno));
      else
        throw ParseError("too many fields", lineno);
      ++field;
      if (q == line_end) break;
      p = q + 1;
    }
    if (field != cols + 3)
      throw ParseError("expected " + std::to_string(cols + 3) +
                           " fields, got " + std::to_string(field),
                       lineno);
    ++r;
  }
  if (r != meta_rows)
    throw SchemaError(path + ": sidecar says " + std::to_string(meta_rows) +
                      " rows, file has " + std::to_string(r));
  return ds;
}

}  // namespace polyobs
