#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "polyobs/dataset.hpp"

namespace polyobs {

// Exponent rows in graded lexicographic order: ascending total degree, and
// within a degree the leftmost variable carries the highest power first.
// Row 0 is always the constant monomial.
struct PowerMatrix {
  int n_xi = 0;
  int degree = 0;
  std::vector<std::uint8_t> rows;  // n_m * n_xi, row-major

  std::size_t count() const { return n_xi == 0 ? 0 : rows.size() / n_xi; }
  const std::uint8_t* row(std::size_t i) const { return rows.data() + i * n_xi; }
  int row_degree(std::size_t i) const;
};

// binomial(n_xi + d, d) in exact integer arithmetic; throws on 64-bit overflow.
unsigned long long monomial_count(int n_xi, int d);

// Throws CapacityError (naming the count) when the enumeration would exceed cap.
PowerMatrix enumerate_monomials(int n_xi, int d,
                                unsigned long long cap = 1000000ULL);

struct PolynomialModel {
  PowerMatrix powers;        // active rows only
  Eigen::VectorXd coeffs;    // aligned with powers rows
  Scaler scaler;             // applied to raw features before evaluation
  int degree = 0;
};

// Standardizes xi_raw with the model's scaler, then sums c_i * prod xi^p_ij.
double eval_polynomial(const PolynomialModel& model,
                       const Eigen::VectorXd& xi_raw);
Eigen::VectorXd eval_polynomial(const PolynomialModel& model,
                                const Eigen::MatrixXd& rows_raw);

// Same sum on rows that are already standardized (the scaler is skipped);
// the fitting and evaluation paths operate in standardized space throughout.
Eigen::VectorXd predict_standardized(const PolynomialModel& model,
                                     const Eigen::MatrixXd& X_std);

// Least squares through the normal equations with a trace-scaled ridge
// (1e-10 * trace(G'G)/cols) so rank-deficient systems still have a unique
// deterministic answer.
Eigen::VectorXd ols_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y);

struct PlarsConfig {
  std::vector<int> degree_grid{1, 3, 5};
  int window_w = 200;          // candidate monomials per selection window
  int per_window_pick = 1;
  int passes = 400;            // upper bound; early stopping ends the search
  double stop_tol = 1e-4;      // relative validation improvement that counts
  int patience = 80;           // picks tolerated without such an improvement
  int max_active = 300;
  double degree_band = 1.0;    // lowest degree within (1+band)*best wins
  unsigned long long monomial_cap = 1000000ULL;
};

struct PlarsDiagnostics {
  double val_mse = 0.0;
  int active_count = 0;
  int picks_total = 0;   // columns kept before the snapshot was cut back
  int passes_run = 0;
};

// Windowed least-angle selection: per pass the non-active columns are walked
// in enumeration order in windows of window_w; each window contributes the
// per_window_pick columns best correlated (centered, unit-norm) with the
// current residual, with an OLS refit after every window. The model returned
// is the snapshot with the best validation MSE, refit on its active set.
// Features are expected already standardized; `scaler` is stored in the model
// so raw inputs can be evaluated later.
PolynomialModel plars_fit(const Eigen::MatrixXd& fit_X,
                          const Eigen::VectorXd& fit_y,
                          const Eigen::MatrixXd& val_X,
                          const Eigen::VectorXd& val_y, int degree,
                          const PlarsConfig& cfg, const Scaler& scaler,
                          PlarsDiagnostics* diag = nullptr);

struct DegreeSelection {
  PolynomialModel model;
  int degree = 0;
  std::map<int, PlarsDiagnostics> per_degree;
};

// Fits one model per degree in the grid and keeps the lowest degree whose
// validation MSE is within (1 + degree_band) of the grid minimum. Exact ties
// already fall to the lower degree as the band's zero limit.
DegreeSelection select_hyperparameters(const Eigen::MatrixXd& fit_X,
                                       const Eigen::VectorXd& fit_y,
                                       const Eigen::MatrixXd& val_X,
                                       const Eigen::VectorXd& val_y,
                                       const PlarsConfig& cfg,
                                       const Scaler& scaler);

// Structured-text model file: degree, scaler, active rows, coefficients and
// free-form provenance. Import reproduces predictions bit-identically.
void save_model(const PolynomialModel& model, const std::string& provenance_json,
                const std::string& path);
PolynomialModel load_model(const std::string& path,
                           std::string* provenance_json = nullptr);

}  // namespace polyobs
