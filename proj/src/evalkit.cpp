#include "polyobs/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "polyobs/errors.hpp"

namespace polyobs {

double percentile(const Eigen::VectorXd& values, double q) {
  if (values.size() == 0) throw ConfigError("percentile: empty input");
  if (q < 0.0 || q > 100.0) throw ConfigError("percentile: q outside [0,100]");
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  const double pos = (static_cast<double>(v.size()) - 1.0) * q / 100.0;
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

double relative_percentile(const Eigen::VectorXd& z,
                           const Eigen::VectorXd& z_hat, double q) {
  if (z.size() != z_hat.size())
    throw ConfigError("relative_percentile: length mismatch");
  if (z.size() == 0) throw ConfigError("relative_percentile: empty input");
  const double med = percentile(z.cwiseAbs(), 50.0);
  if (med == 0.0)
    throw NumericError("relative_percentile: degenerate target, median |z| is 0");
  return percentile((z - z_hat).cwiseAbs(), q) / med;
}

double comparison_ratio(double p_algo, double p_ref, double epsilon) {
  return 100.0 * (p_algo - p_ref) / (p_ref + epsilon);
}

Report build_report(const std::vector<std::string>& algorithms,
                    const std::vector<Eigen::VectorXd>& predictions,
                    const Eigen::VectorXd& clean_labels,
                    const std::string& system, int target_id, double sigma_p,
                    double noise, const std::string& reference) {
  if (algorithms.size() != predictions.size())
    throw ConfigError("build_report: algorithm / prediction count mismatch");

  Report report;
  for (std::size_t a = 0; a < algorithms.size(); ++a) {
    if (predictions[a].size() != clean_labels.size())
      throw ConfigError("build_report: prediction length mismatch for " +
                        algorithms[a]);
    MetricsRow row;
    row.system = system;
    row.target_id = target_id;
    row.sigma_p = sigma_p;
    row.noise = noise;
    row.algorithm = algorithms[a];
    row.sample_count = static_cast<long>(clean_labels.size());
    for (int q : kQuantiles)
      row.p_q.push_back(relative_percentile(clean_labels, predictions[a], q));
    report.metrics.push_back(std::move(row));
  }

  const MetricsRow* ref = nullptr;
  for (const auto& row : report.metrics)
    if (row.algorithm == reference) ref = &row;
  if (ref) {
    for (const auto& row : report.metrics) {
      if (row.algorithm == reference) continue;
      for (std::size_t qi = 0; qi < kQuantiles.size(); ++qi)
        report.comparisons.push_back(
            {row.algorithm, kQuantiles[qi],
             comparison_ratio(row.p_q[qi], ref->p_q[qi])});
    }
  }
  return report;
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::string render_report_text(const Report& report) {
  std::ostringstream os;
  os << "system    z  sigma_p  noise   algorithm  ";
  for (int q : kQuantiles) {
    std::string h = "p" + std::to_string(q);
    os << h << std::string(11 - h.size(), ' ');
  }
  os << "samples\n";
  for (const auto& row : report.metrics) {
    char line[256];
    std::snprintf(line, sizeof line, "%-8s  %d  %.2f     %.3f   %-9s  ",
                  row.system.c_str(), row.target_id, row.sigma_p, row.noise,
                  row.algorithm.c_str());
    os << line;
    for (double p : row.p_q) os << fmt("%-11.6f", p);
    os << row.sample_count << "\n";
  }
  if (!report.comparisons.empty()) {
    os << "\nrelative to plars [%]:\nalgorithm  ";
    for (int q : kQuantiles) {
      std::string h = "q" + std::to_string(q);
      os << h << std::string(11 - h.size(), ' ');
    }
    os << "\n";
    std::string current;
    for (const auto& cell : report.comparisons) {
      if (cell.algorithm != current) {
        if (!current.empty()) os << "\n";
        current = cell.algorithm;
        char head[64];
        std::snprintf(head, sizeof head, "%-9s  ", current.c_str());
        os << head;
      }
      os << fmt("%-11.2f", cell.percent);
    }
    os << "\n";
  }
  return os.str();
}

std::string render_report_csv(const Report& report) {
  std::ostringstream os;
  os << "system,target,sigma_p,noise,algorithm,q,p_q,vs_plars_pct,samples\n";
  for (const auto& row : report.metrics) {
    for (std::size_t qi = 0; qi < kQuantiles.size(); ++qi) {
      os << row.system << "," << row.target_id << "," << fmt("%.17g", row.sigma_p)
         << "," << fmt("%.17g", row.noise) << "," << row.algorithm << ","
         << kQuantiles[qi] << "," << fmt("%.17g", row.p_q[qi]) << ",";
      for (const auto& cell : report.comparisons)
        if (cell.algorithm == row.algorithm && cell.q == kQuantiles[qi])
          os << fmt("%.17g", cell.percent);
      os << "," << row.sample_count << "\n";
    }
  }
  return os.str();
}

}  // namespace polyobs
