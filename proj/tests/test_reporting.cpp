#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "slagflow/reporting.hpp"
#include "slagflow/rng.hpp"
#include "support/tempdir.hpp"

using namespace slagflow;
using testsupport::TempDir;

namespace {

ExperimentSummary summary_with(const std::string& id,
                               const std::vector<std::vector<double>>& accs_per_fold) {
  ExperimentSummary s;
  s.config.id = id;
  s.config.axes = {"y"};
  s.config.classes = {StageLabel::BeforeSlag, StageLabel::DuringSlag};
  int domain = 16;
  for (const auto& accs : accs_per_fold) {
    AggregateResult agg;
    agg.config_id = id;
    agg.test_domain = domain--;
    agg.accs = accs;
    agg.mean = mean_of(accs);
    agg.stdev = sample_std(accs);
    agg.std_undefined = accs.size() < 2;
    agg.confusions.assign(accs.size(), {{3, 1}, {0, 4}});
    s.per_fold.push_back(std::move(agg));
    s.all_points.insert(s.all_points.end(), accs.begin(), accs.end());
  }
  s.mean = mean_of(s.all_points);
  s.stdev = sample_std(s.all_points);
  return s;
}

}  // namespace

TEST_SUITE("reporting") {

TEST_CASE("mean-std rendering uses two decimals on the percent scale") {
  CHECK(format_mean_std(0.8276, 0.0291) == "82.76 ± 2.91");
  CHECK(format_mean_std(0.8276, 0.0) == "82.76 ± 0.00");
  CHECK(format_mean_std(1.0, 0.0) == "100.00 ± 0.00");
}

TEST_CASE("tables recompute from raw points and sort by config id") {
  const std::vector<ExperimentSummary> results = {
      summary_with("M9", {{0.99, 0.985, 0.995}}),
      summary_with("A2", {{0.62, 0.64}, {0.65, 0.63}}),
  };
  const ReportTable table = build_table(results);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].config_id == "A2");  // sorted
  CHECK(table.rows[1].config_id == "M9");
  CHECK(table.rows[0].mean == doctest::Approx(0.635));
  CHECK(table.rows[0].per_fold.size() == 2);
  CHECK(table.rows[1].formatted ==
        format_mean_std(table.rows[1].mean, table.rows[1].stdev));
  CHECK_THROWS_AS(build_table({}), EmptyInput);
}

TEST_CASE("table json round-trips") {
  const ReportTable table =
      build_table({summary_with("G-a", {{0.5, 0.6}}), summary_with("G-b", {{0.7}})});
  const ReportTable back = ReportTable::from_json_string(table.to_json_string());
  REQUIRE(back.rows.size() == table.rows.size());
  for (size_t i = 0; i < table.rows.size(); ++i) {
    CHECK(back.rows[i].config_id == table.rows[i].config_id);
    CHECK(back.rows[i].mean == table.rows[i].mean);
    CHECK(back.rows[i].stdev == table.rows[i].stdev);
    CHECK(back.rows[i].formatted == table.rows[i].formatted);
    CHECK(back.rows[i].per_fold == table.rows[i].per_fold);
  }
  const std::string csv = table.to_csv();
  CHECK(csv.find("config_id,mean,std,formatted") == 0);
  CHECK(csv.find("G-a") != std::string::npos);
}

TEST_CASE("textbook quartiles on one through five") {
  const std::vector<double> points = {1, 2, 3, 4, 5};
  const auto stats = boxplot_data({{"m", points}});
  CHECK(stats.at("m").q1 == 2.0);
  CHECK(stats.at("m").median == 3.0);
  CHECK(stats.at("m").q3 == 4.0);
  CHECK(stats.at("m").min == 1.0);
  CHECK(stats.at("m").max == 5.0);
  CHECK(stats.at("m").outliers.empty());
}

TEST_CASE("a single point collapses the box") {
  const auto stats = boxplot_data({{"solo", {0.42}}});
  const BoxStats& s = stats.at("solo");
  CHECK(s.min == 0.42);
  CHECK(s.q1 == 0.42);
  CHECK(s.median == 0.42);
  CHECK(s.q3 == 0.42);
  CHECK(s.max == 0.42);
}

TEST_CASE("quantiles agree with a sorted-percentile oracle") {
  Rng rng(83);
  for (int trial = 0; trial < 30; ++trial) {
    const size_t n = 1 + rng.bounded(100);
    std::vector<double> points(n);
    for (auto& v : points) v = rng.uniform(0.0, 1.0);
    for (const double q : {0.25, 0.5, 0.75}) {
      // oracle: sort, position (n-1)q, interpolate between neighbours
      std::vector<double> sorted = points;
      std::sort(sorted.begin(), sorted.end());
      const double pos = q * static_cast<double>(n - 1);
      const size_t lo = static_cast<size_t>(pos);
      const size_t hi = std::min(n - 1, lo + 1);
      const double expected = sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo);
      CHECK(quantile_linear(points, q) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("outliers beyond 1.5 iqr are listed") {
  const std::vector<double> points = {0.50, 0.51, 0.52, 0.53, 0.54, 0.55, 0.95};
  const auto stats = boxplot_data({{"m", points}});
  REQUIRE(stats.at("m").outliers.size() == 1);
  CHECK(stats.at("m").outliers.front() == 0.95);
}

TEST_CASE("a clearly better method sits above a worse one") {
  const auto stats = boxplot_data({
      {"strong", {0.99, 0.985, 0.992, 0.988}},
      {"weak", {0.62, 0.64, 0.61, 0.65}},
  });
  CHECK(stats.at("strong").q1 > stats.at("weak").q3);
  const std::string json_text = boxplot_json(stats);
  CHECK(json_text.find("strong") != std::string::npos);
  CHECK(json_text.find("median") != std::string::npos);
}

TEST_CASE("confusion rendering writes exact counts and the accuracy annotation") {
  TempDir dir("sf-report");
  const std::vector<std::vector<int64_t>> confusion = {{9, 1}, {2, 8}};
  const auto svg = dir.path / "c.svg";
  const auto csv = dir.path / "c.csv";
  render_confusion(confusion, {"no_slag", "slag"}, svg, csv);

  std::ifstream csv_in(csv);
  const std::string csv_text((std::istreambuf_iterator<char>(csv_in)),
                             std::istreambuf_iterator<char>());
  CHECK(csv_text == "true\\pred,no_slag,slag\nno_slag,9,1\nslag,2,8\n");

  std::ifstream svg_in(svg);
  const std::string svg_text((std::istreambuf_iterator<char>(svg_in)),
                             std::istreambuf_iterator<char>());
  CHECK(svg_text.find("accuracy 85.00%") != std::string::npos);  // trace 17 / 20
  CHECK(svg_text.find("<svg") != std::string::npos);
}

TEST_CASE("a perfect 2x2 confusion annotates 100 percent") {
  TempDir dir("sf-report");
  render_confusion({{5, 0}, {0, 5}}, {"a", "b"}, dir.path / "i.svg",
                   dir.path / "i.csv");
  std::ifstream svg_in(dir.path / "i.svg");
  const std::string svg_text((std::istreambuf_iterator<char>(svg_in)),
                             std::istreambuf_iterator<char>());
  CHECK(svg_text.find("accuracy 100.00%") != std::string::npos);
}

TEST_CASE("non-square confusions and label mismatches are rejected") {
  TempDir dir("sf-report");
  CHECK_THROWS_AS(render_confusion({{1, 2, 3}, {4, 5, 6}}, {"a", "b"},
                                   dir.path / "x.svg", dir.path / "x.csv"),
                  ShapeMismatch);
  CHECK_THROWS_AS(render_confusion({{1, 2}, {3, 4}}, {"a"}, dir.path / "x.svg",
                                   dir.path / "x.csv"),
                  ShapeMismatch);
  CHECK_THROWS_AS(render_confusion({}, {}, dir.path / "x.svg", dir.path / "x.csv"),
                  ShapeMismatch);
}

TEST_CASE("three-class confusions render too") {
  TempDir dir("sf-report");
  render_confusion({{4, 1, 0}, {1, 3, 1}, {0, 0, 5}}, {"e", "b", "s"},
                   dir.path / "t.svg", dir.path / "t.csv");
  std::ifstream csv_in(dir.path / "t.csv");
  const std::string csv_text((std::istreambuf_iterator<char>(csv_in)),
                             std::istreambuf_iterator<char>());
  CHECK(csv_text.find("e,4,1,0") != std::string::npos);
}

}  // TEST_SUITE
