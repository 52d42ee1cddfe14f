#include "polyobs/polyfit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "polyobs/errors.hpp"

namespace polyobs {

int PowerMatrix::row_degree(std::size_t i) const {
  const std::uint8_t* r = row(i);
  int d = 0;
  for (int j = 0; j < n_xi; ++j) d += r[j];
  return d;
}

unsigned long long monomial_count(int n_xi, int d) {
  if (n_xi < 1) throw ConfigError("monomial_count: n_xi must be >= 1");
  if (d < 0) throw ConfigError("monomial_count: degree must be >= 0");
  // binomial(n_xi + d, d) by the multiplicative recurrence; each step is an
  // exact integer because C(n+i, i) = C(n+i-1, i-1) * (n+i) / i.
  unsigned long long c = 1;
  for (int i = 1; i <= d; ++i) {
    unsigned __int128 t = static_cast<unsigned __int128>(c) *
                          static_cast<unsigned long long>(n_xi + i);
    t /= static_cast<unsigned long long>(i);
    if (t > std::numeric_limits<unsigned long long>::max())
      throw ConfigError("monomial_count overflow: binomial(" +
                        std::to_string(n_xi + d) + ", " + std::to_string(d) +
                        ") exceeds the 64-bit integer range");
    c = static_cast<unsigned long long>(t);
  }
  return c;
}

namespace {

void emit_compositions(int n_xi, int total, int pos, std::vector<std::uint8_t>& cur,
                       std::vector<std::uint8_t>& rows) {
  if (pos == n_xi - 1) {
    cur[pos] = static_cast<std::uint8_t>(total);
    rows.insert(rows.end(), cur.begin(), cur.end());
    return;
  }
  for (int e = total; e >= 0; --e) {
    cur[pos] = static_cast<std::uint8_t>(e);
    emit_compositions(n_xi, total - e, pos + 1, cur, rows);
  }
}

}  // namespace

PowerMatrix enumerate_monomials(int n_xi, int d, unsigned long long cap) {
  unsigned long long count = monomial_count(n_xi, d);
  if (count > cap)
    throw CapacityError("enumerate_monomials: " + std::to_string(count) +
                            " monomials exceed the cap of " +
                            std::to_string(cap),
                        count);
  if (d > 255) throw ConfigError("enumerate_monomials: degree too large");
  PowerMatrix P;
  P.n_xi = n_xi;
  P.degree = d;
  P.rows.reserve(static_cast<std::size_t>(count) * n_xi);
  std::vector<std::uint8_t> cur(n_xi, 0);
  for (int total = 0; total <= d; ++total)
    emit_compositions(n_xi, total, 0, cur, P.rows);
  return P;
}

namespace {

// out = prod_j X.col(j)^e_j over every row of X.
void monomial_column(const Eigen::MatrixXd& X, const std::uint8_t* exps,
                     int n_xi, Eigen::VectorXd& out) {
  out.setOnes(X.rows());
  for (int j = 0; j < n_xi; ++j)
    for (int e = 0; e < exps[j]; ++e) out.array() *= X.col(j).array();
}

}  // namespace

Eigen::VectorXd predict_standardized(const PolynomialModel& model,
                                     const Eigen::MatrixXd& X_std) {
  if (X_std.cols() != model.powers.n_xi)
    throw ConfigError("predict: feature dimension mismatch");
  Eigen::VectorXd pred = Eigen::VectorXd::Zero(X_std.rows());
  Eigen::VectorXd col;
  for (std::size_t i = 0; i < model.powers.count(); ++i) {
    monomial_column(X_std, model.powers.row(i), model.powers.n_xi, col);
    pred += model.coeffs[static_cast<Eigen::Index>(i)] * col;
  }
  return pred;
}

double eval_polynomial(const PolynomialModel& model,
                       const Eigen::VectorXd& xi_raw) {
  if (xi_raw.size() != model.powers.n_xi)
    throw ConfigError("eval_polynomial: feature dimension mismatch");
  Eigen::VectorXd xi = apply_scaler(model.scaler, xi_raw);
  double sum = 0.0;
  for (std::size_t i = 0; i < model.powers.count(); ++i) {
    const std::uint8_t* e = model.powers.row(i);
    double term = model.coeffs[static_cast<Eigen::Index>(i)];
    for (int j = 0; j < model.powers.n_xi; ++j)
      for (int rep = 0; rep < e[j]; ++rep) term *= xi[j];
    sum += term;
  }
  return sum;
}

Eigen::VectorXd eval_polynomial(const PolynomialModel& model,
                                const Eigen::MatrixXd& rows_raw) {
  return predict_standardized(model, apply_scaler(model.scaler, rows_raw));
}

Eigen::VectorXd ols_fit(const Eigen::MatrixXd& design,
                        const Eigen::VectorXd& y) {
  if (design.rows() < 1 || design.cols() < 1)
    throw ConfigError("ols_fit: empty design");
  if (design.rows() != y.size())
    throw ConfigError("ols_fit: row count mismatch");
  if (!design.allFinite() || !y.allFinite())
    throw NumericError("ols_fit: non-finite input");
  Eigen::MatrixXd A = design.transpose() * design;
  Eigen::VectorXd b = design.transpose() * y;
  const double lambda = 1e-10 * A.trace() / static_cast<double>(A.cols());
  A.diagonal().array() += lambda;
  return A.ldlt().solve(b);
}

namespace {

struct ActiveState {
  // Design columns in pick order over fit and validation rows, plus the
  // normal equations maintained incrementally.
  Eigen::MatrixXd Gf;
  Eigen::MatrixXd Gv;
  Eigen::MatrixXd A;  // Gf' Gf, top-left n x n block valid
  Eigen::VectorXd b;  // Gf' y
  int n = 0;

  void init(Eigen::Index fit_rows, Eigen::Index val_rows, int capacity) {
    Gf.resize(fit_rows, capacity);
    Gv.resize(val_rows, capacity);
    A.setZero(capacity, capacity);
    b.setZero(capacity);
  }

  void push(const Eigen::VectorXd& gf, const Eigen::VectorXd& gv,
            const Eigen::VectorXd& y) {
    Gf.col(n) = gf;
    Gv.col(n) = gv;
    for (int i = 0; i <= n; ++i) {
      double v = gf.dot(Gf.col(i));
      A(n, i) = v;
      A(i, n) = v;
    }
    b[n] = gf.dot(y);
    ++n;
  }

  Eigen::VectorXd solve() const {
    Eigen::MatrixXd An = A.topLeftCorner(n, n);
    const double lambda = 1e-10 * An.trace() / static_cast<double>(n);
    An.diagonal().array() += lambda;
    return An.ldlt().solve(b.head(n));
  }
};

}  // namespace

PolynomialModel plars_fit(const Eigen::MatrixXd& fit_X,
                          const Eigen::VectorXd& fit_y,
                          const Eigen::MatrixXd& val_X,
                          const Eigen::VectorXd& val_y, int degree,
                          const PlarsConfig& cfg, const Scaler& scaler,
                          PlarsDiagnostics* diag) {
  if (fit_X.rows() < 1) throw ConfigError("plars_fit: empty fit set");
  if (val_X.rows() < 1) throw ConfigError("plars_fit: empty validation set");
  if (fit_X.cols() != val_X.cols())
    throw ConfigError("plars_fit: fit/validation dimension mismatch");
  if (cfg.window_w < 1) throw ConfigError("plars_fit: window_w must be >= 1");
  if (cfg.per_window_pick < 1 || cfg.patience < 1 || cfg.max_active < 1 ||
      cfg.passes < 1)
    throw ConfigError("plars_fit: selection knobs must be positive");

  const int n_xi = static_cast<int>(fit_X.cols());
  const Eigen::Index n_f = fit_X.rows();
  const Eigen::Index n_v = val_X.rows();
  PowerMatrix P = enumerate_monomials(n_xi, degree, cfg.monomial_cap);
  const long n_m = static_cast<long>(P.count());

  // Power table over the fit rows: column j*degree+(e-1) holds X.col(j)^e.
  Eigen::MatrixXd powf;
  if (degree >= 1) {
    powf.resize(n_f, static_cast<Eigen::Index>(n_xi) * degree);
    for (int j = 0; j < n_xi; ++j) {
      powf.col(static_cast<Eigen::Index>(j) * degree) = fit_X.col(j);
      for (int e = 2; e <= degree; ++e)
        powf.col(static_cast<Eigen::Index>(j) * degree + e - 1) =
            powf.col(static_cast<Eigen::Index>(j) * degree + e - 2)
                .cwiseProduct(fit_X.col(j));
    }
  }
  auto fit_column = [&](long mono, Eigen::VectorXd& out) {
    const std::uint8_t* e = P.row(mono);
    bool first = true;
    for (int j = 0; j < n_xi; ++j) {
      if (e[j] == 0) continue;
      const auto pc = powf.col(static_cast<Eigen::Index>(j) * degree + e[j] - 1);
      if (first) {
        out = pc;
        first = false;
      } else {
        out.array() *= pc.array();
      }
    }
    if (first) out.setOnes(n_f);
  };
  Eigen::VectorXd vcol;
  auto val_column = [&](long mono, Eigen::VectorXd& out) {
    monomial_column(val_X, P.row(mono), n_xi, out);
  };

  const int capacity =
      static_cast<int>(std::min<long>(n_m, cfg.max_active + cfg.per_window_pick));
  ActiveState st;
  st.init(n_f, n_v, capacity);

  std::vector<long> active;
  std::vector<char> is_active(n_m, 0);
  Eigen::VectorXd col;

  auto push_monomial = [&](long mono) {
    fit_column(mono, col);
    val_column(mono, vcol);
    st.push(col, vcol, fit_y);
    active.push_back(mono);
    is_active[mono] = 1;
  };
  push_monomial(0);  // constant monomial seeds the active set

  Eigen::VectorXd coef = st.solve();
  Eigen::VectorXd residual = fit_y - st.Gf.leftCols(st.n) * coef;

  // On exactly representable labels the ridge makes successive refits wobble
  // around 1e-13 of the label scale, and without a floor those wobbles read
  // as improvements and drag the snapshot through junk monomials. Anything
  // below a relative RMSE of 1e-6 counts as converged.
  const double val_floor =
      1e-12 * (val_y.squaredNorm() / static_cast<double>(n_v));
  auto val_mse = [&](const Eigen::VectorXd& c) {
    double mse =
        (val_y - st.Gv.leftCols(st.n) * c).squaredNorm() / static_cast<double>(n_v);
    return std::max(mse, val_floor);
  };

  double best_val = val_mse(coef);
  int best_len = st.n;
  int since_best = 0;
  int picks_total = 0;
  int passes_run = 0;
  bool done = false;

  std::vector<long> nonactive;
  std::vector<std::pair<double, long>> ranked;
  for (int pass = 0; pass < cfg.passes && !done; ++pass) {
    ++passes_run;
    nonactive.clear();
    for (long i = 0; i < n_m; ++i)
      if (!is_active[i]) nonactive.push_back(i);
    if (nonactive.empty()) break;

    bool kept_any = false;
    const double rsum = residual.sum();
    for (std::size_t w0 = 0; w0 < nonactive.size() && !done;
         w0 += cfg.window_w) {
      const std::size_t w1 =
          std::min(nonactive.size(), w0 + static_cast<std::size_t>(cfg.window_w));
      ranked.clear();
      for (std::size_t idx = w0; idx < w1; ++idx) {
        const long mono = nonactive[idx];
        fit_column(mono, col);
        const double mean = col.mean();
        const double sq = col.squaredNorm() - n_f * mean * mean;
        if (sq <= 1e-60) continue;  // centered column is numerically zero
        const double corr =
            std::abs(col.dot(residual) - mean * rsum) / std::sqrt(sq);
        if (corr > 0.0) ranked.emplace_back(corr, mono);
      }
      if (ranked.empty()) continue;
      const std::size_t take =
          std::min<std::size_t>(cfg.per_window_pick, ranked.size());
      // Stable order: larger correlation first, then lower enumeration index.
      std::partial_sort(ranked.begin(), ranked.begin() + take, ranked.end(),
                        [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                        });
      int picked = 0;
      for (std::size_t t = 0; t < take && st.n < capacity; ++t) {
        push_monomial(ranked[t].second);
        ++picked;
      }
      if (picked == 0) continue;
      kept_any = true;
      picks_total += picked;

      coef = st.solve();
      residual = fit_y - st.Gf.leftCols(st.n) * coef;
      const double val = val_mse(coef);
      if (val < best_val * (1.0 - cfg.stop_tol)) {
        best_val = val;
        best_len = st.n;
        since_best = 0;
      } else {
        since_best += picked;
      }
      if (since_best >= cfg.patience || st.n >= cfg.max_active) done = true;
    }
    if (!kept_any) break;
  }

  // Keep the snapshot with the best validation error and refit on it.
  std::vector<long> chosen(active.begin(), active.begin() + best_len);
  std::sort(chosen.begin(), chosen.end());

  Eigen::MatrixXd Gf_final(n_f, best_len);
  for (int i = 0; i < best_len; ++i) {
    fit_column(chosen[i], col);
    Gf_final.col(i) = col;
  }
  Eigen::VectorXd final_coef = ols_fit(Gf_final, fit_y);

  PolynomialModel model;
  model.powers.n_xi = n_xi;
  model.powers.degree = degree;
  model.powers.rows.reserve(static_cast<std::size_t>(best_len) * n_xi);
  for (int i = 0; i < best_len; ++i) {
    const std::uint8_t* r = P.row(chosen[i]);
    model.powers.rows.insert(model.powers.rows.end(), r, r + n_xi);
  }
  model.coeffs = final_coef;
  model.scaler = scaler;
  model.degree = 0;
  for (int i = 0; i < best_len; ++i)
    if (final_coef[i] != 0.0)
      model.degree = std::max(model.degree,
                              model.powers.row_degree(static_cast<std::size_t>(i)));

  if (diag) {
    Eigen::VectorXd val_pred = predict_standardized(model, val_X);
    diag->val_mse = (val_y - val_pred).squaredNorm() / static_cast<double>(n_v);
    diag->active_count = best_len;
    diag->picks_total = picks_total;
    diag->passes_run = passes_run;
  }
  return model;
}

DegreeSelection select_hyperparameters(const Eigen::MatrixXd& fit_X,
                                       const Eigen::VectorXd& fit_y,
                                       const Eigen::MatrixXd& val_X,
                                       const Eigen::VectorXd& val_y,
                                       const PlarsConfig& cfg,
                                       const Scaler& scaler) {
  if (cfg.degree_grid.empty())
    throw ConfigError("select_hyperparameters: empty degree grid");
  std::vector<int> grid = cfg.degree_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  DegreeSelection sel;
  std::map<int, PolynomialModel> models;
  double vmin = std::numeric_limits<double>::infinity();
  for (int d : grid) {
    PlarsDiagnostics diag;
    models[d] = plars_fit(fit_X, fit_y, val_X, val_y, d, cfg, scaler, &diag);
    sel.per_degree[d] = diag;
    vmin = std::min(vmin, diag.val_mse);
  }
  for (int d : grid) {
    if (sel.per_degree[d].val_mse <= vmin * (1.0 + cfg.degree_band)) {
      sel.degree = d;
      sel.model = models[d];
      break;
    }
  }
  return sel;
}

void save_model(const PolynomialModel& model, const std::string& provenance_json,
                const std::string& path) {
  nlohmann::json j;
  j["format"] = "polyobs-model-v1";
  j["n_xi"] = model.powers.n_xi;
  j["degree"] = model.degree;
  j["enumeration_degree"] = model.powers.degree;
  j["scaler"] = {{"means", std::vector<double>(model.scaler.means.data(),
                                               model.scaler.means.data() +
                                                   model.scaler.means.size())},
                 {"stds", std::vector<double>(model.scaler.stds.data(),
                                              model.scaler.stds.data() +
                                                  model.scaler.stds.size())}};
  std::vector<std::vector<int>> powers(model.powers.count());
  for (std::size_t i = 0; i < model.powers.count(); ++i) {
    const std::uint8_t* r = model.powers.row(i);
    powers[i].assign(r, r + model.powers.n_xi);
  }
  j["powers"] = powers;
  j["coeffs"] = std::vector<double>(model.coeffs.data(),
                                    model.coeffs.data() + model.coeffs.size());
  if (!provenance_json.empty()) {
    try {
      j["provenance"] = nlohmann::json::parse(provenance_json);
    } catch (const nlohmann::json::exception&) {
      j["provenance"] = provenance_json;
    }
  }
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << j.dump(2) << "\n";
  if (!f) throw Error("failed while writing " + path);
}

PolynomialModel load_model(const std::string& path,
                           std::string* provenance_json) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad model file: ") + e.what(), 0);
  }
  if (j.value("format", "") != "polyobs-model-v1")
    throw SchemaError(path + ": not a polyobs model file");

  PolynomialModel model;
  model.powers.n_xi = j.at("n_xi").get<int>();
  model.powers.degree = j.at("enumeration_degree").get<int>();
  model.degree = j.at("degree").get<int>();
  auto means = j.at("scaler").at("means").get<std::vector<double>>();
  auto stds = j.at("scaler").at("stds").get<std::vector<double>>();
  model.scaler.means =
      Eigen::Map<Eigen::VectorXd>(means.data(), static_cast<long>(means.size()));
  model.scaler.stds =
      Eigen::Map<Eigen::VectorXd>(stds.data(), static_cast<long>(stds.size()));
  auto powers = j.at("powers").get<std::vector<std::vector<int>>>();
  for (const auto& row : powers) {
    if (static_cast<int>(row.size()) != model.powers.n_xi)
      throw SchemaError(path + ": power row width mismatch");
    for (int e : row) model.powers.rows.push_back(static_cast<std::uint8_t>(e));
  }
  auto coeffs = j.at("coeffs").get<std::vector<double>>();
  if (coeffs.size() != powers.size())
    throw SchemaError(path + ": coefficient / power row count mismatch");
  model.coeffs = Eigen::Map<Eigen::VectorXd>(coeffs.data(),
                                             static_cast<long>(coeffs.size()));
  if (provenance_json) {
    if (j.contains("provenance"))
      *provenance_json = j.at("provenance").dump();
    else
      provenance_json->clear();
  }
  return model;
}

}  // namespace polyobs
