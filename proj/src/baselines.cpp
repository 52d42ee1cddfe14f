#include "polyobs/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "polyobs/errors.hpp"

namespace polyobs {

namespace {

constexpr Eigen::Index kChunk = 512;  // query rows per distance block

// Indices of the k nearest stored rows for every query, nearest first.
// Distance ties break toward the lower stored-row index.
std::vector<std::vector<int>> nearest_indices(const Eigen::MatrixXd& rows,
                                              const Eigen::MatrixXd& queries,
                                              int k) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index nq = queries.rows();
  Eigen::VectorXd rr = rows.rowwise().squaredNorm();

  std::vector<std::vector<int>> out(nq);
  std::vector<std::pair<double, int>> cand(n);
  for (Eigen::Index q0 = 0; q0 < nq; q0 += kChunk) {
    const Eigen::Index c = std::min(kChunk, nq - q0);
    Eigen::MatrixXd G = queries.middleRows(q0, c) * rows.transpose();
    Eigen::VectorXd qq = queries.middleRows(q0, c).rowwise().squaredNorm();
    for (Eigen::Index i = 0; i < c; ++i) {
      for (Eigen::Index j = 0; j < n; ++j)
        cand[j] = {qq[i] + rr[j] - 2.0 * G(i, j), static_cast<int>(j)};
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
      auto& dst = out[q0 + i];
      dst.resize(k);
      for (int t = 0; t < k; ++t) dst[t] = cand[t].second;
    }
  }
  return out;
}

}  // namespace

KnnModel make_knn(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                  int k) {
  if (rows.rows() == 0) throw ConfigError("knn: empty model");
  if (rows.rows() != labels.size())
    throw ConfigError("knn: row / label count mismatch");
  if (k < 1 || k > rows.rows())
    throw ConfigError("knn: k must be in [1, stored row count]");
  return KnnModel{rows, labels, k};
}

Eigen::VectorXd knn_predict(const KnnModel& model,
                            const Eigen::MatrixXd& queries) {
  if (model.rows.rows() == 0) throw ConfigError("knn: empty model");
  if (queries.cols() != model.rows.cols())
    throw ConfigError("knn: query dimension mismatch");
  auto nn = nearest_indices(model.rows, queries, model.k);
  Eigen::VectorXd pred(queries.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    double sum = 0.0;
    for (int j : nn[i]) sum += model.labels[j];
    pred[i] = sum / static_cast<double>(model.k);
  }
  return pred;
}

double knn_predict(const KnnModel& model, const Eigen::VectorXd& xi) {
  Eigen::MatrixXd q(1, xi.size());
  q.row(0) = xi;
  return knn_predict(model, q)[0];
}

KnnSelection select_knn(const Eigen::MatrixXd& fit_rows,
                        const Eigen::VectorXd& fit_labels,
                        const Eigen::MatrixXd& val_rows,
                        const Eigen::VectorXd& val_labels,
                        const std::vector<int>& grid) {
  if (fit_rows.rows() == 0) throw ConfigError("knn: empty fit set");
  if (val_rows.rows() == 0) throw ConfigError("knn: empty validation set");

  std::vector<int> ks;
  for (int k : grid)
    if (k >= 1 && k <= fit_rows.rows()) ks.push_back(k);
  if (ks.empty())
    throw ConfigError("knn: no grid entry fits the stored row count");
  std::sort(ks.begin(), ks.end());
  const int kmax = ks.back();

  // One neighbor scan at the largest k; the smaller ones are prefixes.
  auto nn = nearest_indices(fit_rows, val_rows, kmax);
  std::vector<double> sse(ks.size(), 0.0);
  for (Eigen::Index i = 0; i < val_rows.rows(); ++i) {
    double run = 0.0;
    std::size_t g = 0;
    for (int t = 0; t < kmax && g < ks.size(); ++t) {
      run += fit_labels[nn[i][t]];
      if (t + 1 == ks[g]) {
        const double err = val_labels[i] - run / ks[g];
        sse[g] += err * err;
        ++g;
      }
    }
  }

  KnnSelection sel;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < ks.size(); ++g) {
    const double mse = sse[g] / static_cast<double>(val_rows.rows());
    sel.val_mse.emplace_back(ks[g], mse);
    if (mse < best) {  // ties keep the smaller k
      best = mse;
      sel.k = ks[g];
    }
  }
  return sel;
}

}  // namespace polyobs
