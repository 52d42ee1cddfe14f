#pragma once

#include <Eigen/Dense>
#include <vector>

namespace polyobs {

// Brute-force k-nearest-neighbors regressor. Fit sets stay small (a few
// thousand rows), so an exact O(n) scan per query is both adequate and
// exactly testable.
struct KnnModel {
  Eigen::MatrixXd rows;    // stored standardized (noisy) fit features
  Eigen::VectorXd labels;
  int k = 1;
};

KnnModel make_knn(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                  int k);

// Unweighted mean of the k nearest labels by Euclidean distance; distance
// ties break toward the lower stored-row index.
double knn_predict(const KnnModel& model, const Eigen::VectorXd& xi);
Eigen::VectorXd knn_predict(const KnnModel& model, const Eigen::MatrixXd& queries);

// Validation-MSE grid search. Neighbor lists are computed once for the
// largest k and reused as prefixes for the smaller ones; ties in MSE break
// toward the smaller k.
struct KnnSelection {
  int k = 1;
  std::vector<std::pair<int, double>> val_mse;  // (k, mse) per grid entry
};
KnnSelection select_knn(const Eigen::MatrixXd& fit_rows,
                        const Eigen::VectorXd& fit_labels,
                        const Eigen::MatrixXd& val_rows,
                        const Eigen::VectorXd& val_labels,
                        const std::vector<int>& grid = {1, 3, 5, 10});

}  // namespace polyobs
