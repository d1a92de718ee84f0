#include "slagflow/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "slagflow/errors.hpp"

namespace slagflow {

using nlohmann::json;

std::string format_mean_std(double mean, double stdev) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << mean * 100.0 << " ± " << stdev * 100.0;
  return os.str();
}

ReportTable build_table(const std::vector<ExperimentSummary>& results) {
  if (results.empty()) throw EmptyInput("build_table needs at least one result");
  ReportTable table;
  for (const auto& summary : results) {
    TableRow row;
    row.config_id = summary.config.id;
    std::vector<double> points;
    for (const auto& fold : summary.per_fold) {
      points.insert(points.end(), fold.accs.begin(), fold.accs.end());
      row.per_fold.emplace_back(
          fold.test_domain,
          std::make_pair(mean_of(fold.accs), sample_std(fold.accs)));
    }
    row.mean = mean_of(points);
    row.stdev = sample_std(points);
    row.formatted = format_mean_std(row.mean, row.stdev);
    table.rows.push_back(std::move(row));
  }
  std::sort(table.rows.begin(), table.rows.end(),
            [](const TableRow& a, const TableRow& b) {
              return a.config_id < b.config_id;
            });
  return table;
}

std::string ReportTable::to_json_string() const {
  json rows_json = json::array();
  for (const auto& row : rows) {
    json folds = json::array();
    for (const auto& [domain, stats] : row.per_fold)
      folds.push_back({{"test_domain", domain},
                       {"mean", stats.first},
                       {"std", stats.second}});
    rows_json.push_back({{"config_id", row.config_id},
                         {"mean", row.mean},
                         {"std", row.stdev},
                         {"formatted", row.formatted},
                         {"per_fold", folds}});
  }
  return json{{"schema", "slagflow-table-v1"}, {"rows", rows_json}}.dump(2);
}

ReportTable ReportTable::from_json_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError("table is not valid JSON: " + std::string(e.what()));
  }
  ReportTable table;
  try {
    for (const auto& r : doc.at("rows")) {
      TableRow row;
      row.config_id = r.at("config_id").get<std::string>();
      row.mean = r.at("mean").get<double>();
      row.stdev = r.at("std").get<double>();
      row.formatted = r.at("formatted").get<std::string>();
      for (const auto& f : r.at("per_fold"))
        row.per_fold.emplace_back(
            f.at("test_domain").get<int>(),
            std::make_pair(f.at("mean").get<double>(), f.at("std").get<double>()));
      table.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw ParseError("bad table field: " + std::string(e.what()));
  }
  return table;
}

std::string ReportTable::to_csv() const {
  std::ostringstream os;
  os << "config_id,mean,std,formatted\n";
  for (const auto& row : rows)
    os << row.config_id << ',' << row.mean << ',' << row.stdev << ',' << '"'
       << row.formatted << '"' << '\n';
  return os.str();
}

double quantile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw EmptyInput("quantile of empty list");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = static_cast<size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

std::map<std::string, BoxStats> boxplot_data(
    const std::map<std::string, std::vector<double>>& per_method_points) {
  std::map<std::string, BoxStats> out;
  for (const auto& [method, points] : per_method_points) {
    if (points.empty()) throw EmptyInput("method '" + method + "' has no points");
    BoxStats stats;
    stats.points = points;
    stats.min = *std::min_element(points.begin(), points.end());
    stats.max = *std::max_element(points.begin(), points.end());
    stats.q1 = quantile_linear(points, 0.25);
    stats.median = quantile_linear(points, 0.5);
    stats.q3 = quantile_linear(points, 0.75);
    const double iqr = stats.q3 - stats.q1;
    const double lo = stats.q1 - 1.5 * iqr;
    const double hi = stats.q3 + 1.5 * iqr;
    for (const double p : points)
      if (p < lo || p > hi) stats.outliers.push_back(p);
    out[method] = std::move(stats);
  }
  return out;
}

std::string boxplot_json(const std::map<std::string, BoxStats>& stats) {
  json methods;
  for (const auto& [method, s] : stats) {
    methods[method] = {{"min", s.min},     {"q1", s.q1},
                       {"median", s.median}, {"q3", s.q3},
                       {"max", s.max},     {"outliers", s.outliers},
                       {"points", s.points}};
  }
  return json{{"schema", "slagflow-boxplot-v1"}, {"methods", methods}}.dump(2);
}

void render_confusion(const std::vector<std::vector<int64_t>>& confusion,
                      const std::vector<std::string>& labels,
                      const std::filesystem::path& svg_path,
                      const std::filesystem::path& csv_path) {
  const size_t k = confusion.size();
  if (k == 0) throw ShapeMismatch("empty confusion matrix");
  for (const auto& row : confusion)
    if (row.size() != k) throw ShapeMismatch("confusion matrix is not square");
  if (labels.size() != k)
    throw ShapeMismatch("label count does not match matrix size");

  int64_t total = 0, trace = 0, max_cell = 1;
  for (size_t i = 0; i < k; ++i)
    for (size_t j = 0; j < k; ++j) {
      total += confusion[i][j];
      if (i == j) trace += confusion[i][j];
      max_cell = std::max(max_cell, confusion[i][j]);
    }
  const double accuracy =
      total > 0 ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;

  {
    std::ofstream csv(csv_path);
    if (!csv) throw MissingFile("cannot write " + csv_path.string());
    csv << "true\\pred";
    for (const auto& l : labels) csv << ',' << l;
    csv << '\n';
    for (size_t i = 0; i < k; ++i) {
      csv << labels[i];
      for (size_t j = 0; j < k; ++j) csv << ',' << confusion[i][j];
      csv << '\n';
    }
  }

  constexpr int cell = 80, margin = 90, top = 50;
  const int width = margin + static_cast<int>(k) * cell + 20;
  const int height = top + static_cast<int>(k) * cell + 60;
  std::ofstream svg(svg_path);
  if (!svg) throw MissingFile("cannot write " + svg_path.string());
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
      << height << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << margin << "' y='24' font-family='sans-serif' font-size='16'>"
      << "accuracy " << std::fixed << std::setprecision(2) << accuracy * 100.0
      << "%</text>\n";
  for (size_t i = 0; i < k; ++i) {
    for (size_t j = 0; j < k; ++j) {
      const double frac =
          static_cast<double>(confusion[i][j]) / static_cast<double>(max_cell);
      const int shade = static_cast<int>(255.0 - 205.0 * frac);
      const int x = margin + static_cast<int>(j) * cell;
      const int y = top + static_cast<int>(i) * cell;
      svg << "<rect x='" << x << "' y='" << y << "' width='" << cell << "' height='"
          << cell << "' fill='rgb(" << shade << ',' << shade << ",255)' "
          << "stroke='black'/>\n";
      svg << "<text x='" << x + cell / 2 << "' y='" << y + cell / 2 + 5
          << "' text-anchor='middle' font-family='sans-serif' font-size='16'>"
          << confusion[i][j] << "</text>\n";
    }
  }
  for (size_t i = 0; i < k; ++i) {
    svg << "<text x='" << margin - 8 << "' y='" << top + static_cast<int>(i) * cell +
               cell / 2 + 5
        << "' text-anchor='end' font-family='sans-serif' font-size='14'>" << labels[i]
        << "</text>\n";
    svg << "<text x='" << margin + static_cast<int>(i) * cell + cell / 2 << "' y='"
        << top + static_cast<int>(k) * cell + 24
        << "' text-anchor='middle' font-family='sans-serif' font-size='14'>"
        << labels[i] << "</text>\n";
  }
  svg << "</svg>\n";
}

}  // namespace slagflow
