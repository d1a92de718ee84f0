#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "slagflow/experiments.hpp"

namespace slagflow {

struct TableRow {
  std::string config_id;
  double mean = 0.0;
  double stdev = 0.0;
  std::string formatted;  // "mean ± std", two decimals, percent scale
  // test_domain -> (mean, std)
  std::vector<std::pair<int, std::pair<double, double>>> per_fold;
};

struct ReportTable {
  std::vector<TableRow> rows;

  std::string to_json_string() const;
  static ReportTable from_json_string(const std::string& text);
  std::string to_csv() const;
};

std::string format_mean_std(double mean, double stdev);

// Rows sorted by config id; means/stds recomputed from the raw per-repeat
// accuracies inside each summary.
ReportTable build_table(const std::vector<ExperimentSummary>& results);

struct BoxStats {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  std::vector<double> outliers;  // beyond 1.5 * IQR
  std::vector<double> points;
};

// Quartiles by linear interpolation between closest ranks.
double quantile_linear(std::vector<double> values, double q);
std::map<std::string, BoxStats> boxplot_data(
    const std::map<std::string, std::vector<double>>& per_method_points);
std::string boxplot_json(const std::map<std::string, BoxStats>& stats);

// Heatmap (SVG) + exact-count CSV for one confusion matrix; row order equals
// label order. The accuracy annotation is trace/total.
void render_confusion(const std::vector<std::vector<int64_t>>& confusion,
                      const std::vector<std::string>& labels,
                      const std::filesystem::path& svg_path,
                      const std::filesystem::path& csv_path);

}  // namespace slagflow
