#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace polyobs {

inline const std::vector<int> kQuantiles{50, 80, 95, 99};

// Linear interpolation at position (n-1)*q/100 between order statistics.
double percentile(const Eigen::VectorXd& values, double q);

// percentile(|z - z_hat|, q) / median(|z|). Throws when the median is zero.
double relative_percentile(const Eigen::VectorXd& z,
                           const Eigen::VectorXd& z_hat, double q);

// 100 * (p_algo - p_ref) / (p_ref + epsilon); positive means worse than the
// reference.
double comparison_ratio(double p_algo, double p_ref, double epsilon = 0.001);

struct MetricsRow {
  std::string system;
  int target_id = 1;
  double sigma_p = 0.0;
  double noise = 0.0;
  std::string algorithm;
  std::vector<double> p_q;  // aligned with kQuantiles
  long sample_count = 0;
};

struct ComparisonCell {
  std::string algorithm;
  int q = 0;
  double percent = 0.0;  // vs the reference algorithm's percentile
};

struct Report {
  std::vector<MetricsRow> metrics;
  std::vector<ComparisonCell> comparisons;  // vs the "plars" row
};

// One metrics row per algorithm from its predictions against clean labels,
// plus comparison cells for every non-reference algorithm.
Report build_report(const std::vector<std::string>& algorithms,
                    const std::vector<Eigen::VectorXd>& predictions,
                    const Eigen::VectorXd& clean_labels,
                    const std::string& system, int target_id, double sigma_p,
                    double noise, const std::string& reference = "plars");

// Deterministic renderings: an aligned text table and a machine-readable CSV
// (one row per algorithm x q).
std::string render_report_text(const Report& report);
std::string render_report_csv(const Report& report);

}  // namespace polyobs
