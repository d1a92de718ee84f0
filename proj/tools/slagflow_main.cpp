// Command-line front end: validate | synth | run | report.
// Exit codes: 0 success, 1 domain failure, 2 usage/config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slagflow/dataset.hpp"
#include "slagflow/experiments.hpp"
#include "slagflow/reporting.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slagflow;

namespace {

int cmd_validate(const std::string& manifest) {
  DatasetIndex index;
  try {
    index = load_manifest(manifest);
  } catch (const MalformedManifest& e) {
    std::cerr << "malformed manifest: " << e.what() << "\n";
    return 2;
  } catch (const DuplicateEntry& e) {
    std::cerr << "malformed manifest: " << e.what() << "\n";
    return 2;
  } catch (const MissingFile& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  const ValidationReport report = validate_dataset(index);
  std::cout << report.to_string();
  return report.is_complete ? 0 : 1;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  SyntheticSpec spec;
  try {
    spec = synthetic_spec_from_json_file(spec_path);
  } catch (const Error& e) {
    std::cerr << "bad synthetic spec: " << e.what() << "\n";
    return 2;
  }
  const auto manifest = write_synthetic_dataset(spec, out_dir);
  std::cout << "wrote " << spec.num_domains * 3 << " recordings and manifest "
            << manifest.string() << "\n";
  const ValidationReport report = validate_dataset(load_manifest(manifest));
  std::cout << report.to_string();
  return report.is_complete ? 0 : 1;
}

struct RunFileConfig {
  std::optional<std::string> manifest;
  std::optional<SyntheticSpec> synthetic;
  std::string selection = "grid";  // "grid" | "ablation" | inline config
  std::optional<ExperimentConfig> single;
  fs::path output_dir = "results";
  uint64_t base_seed = 42;
  bool paper_faithful = false;
  int workers = 1;
  std::optional<int> repeats_override;
  std::optional<int> epochs_override;
  std::optional<std::vector<int>> test_domains_override;
};

RunFileConfig parse_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open run config: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("run config is not valid JSON: " + std::string(e.what()));
  }

  RunFileConfig cfg;
  const auto dataset = doc.at("dataset");
  if (dataset.contains("manifest") == dataset.contains("synthetic"))
    throw ParseError("dataset must name exactly one of: manifest, synthetic");
  if (dataset.contains("manifest")) {
    cfg.manifest = dataset["manifest"].get<std::string>();
  } else {
    // reuse the file-based parser by round-tripping the inline object
    const auto tmp = fs::temp_directory_path() / "slagflow_synth_spec.json";
    std::ofstream tmp_out(tmp);
    tmp_out << dataset["synthetic"].dump();
    tmp_out.close();
    cfg.synthetic = synthetic_spec_from_json_file(tmp);
    fs::remove(tmp);
  }

  const auto selection = doc.at("selection");
  if (selection.is_string()) {
    cfg.selection = selection.get<std::string>();
    if (cfg.selection != "grid" && cfg.selection != "ablation")
      throw ParseError("selection must be 'grid', 'ablation', or a config object");
  } else {
    cfg.selection = "single";
    cfg.single = ExperimentConfig::from_json_string(selection.at("config").dump());
  }

  if (doc.contains("output_dir")) cfg.output_dir = doc["output_dir"].get<std::string>();
  if (doc.contains("base_seed")) cfg.base_seed = doc["base_seed"].get<uint64_t>();
  if (doc.contains("paper_faithful"))
    cfg.paper_faithful = doc["paper_faithful"].get<bool>();
  if (doc.contains("workers")) cfg.workers = doc["workers"].get<int>();
  if (doc.contains("overrides")) {
    const auto& ov = doc["overrides"];
    if (ov.contains("repeats")) cfg.repeats_override = ov["repeats"].get<int>();
    if (ov.contains("epochs")) cfg.epochs_override = ov["epochs"].get<int>();
    if (ov.contains("test_domains"))
      cfg.test_domains_override = ov["test_domains"].get<std::vector<int>>();
  }
  return cfg;
}

int cmd_run(const std::string& config_path, std::optional<std::string> output_dir_flag,
            std::optional<uint64_t> seed_flag, std::optional<int> repeats_flag,
            std::optional<int> epochs_flag, std::optional<int> workers_flag,
            bool paper_faithful_flag, bool no_resume, bool verbose) {
  RunFileConfig cfg;
  try {
    cfg = parse_run_config(config_path);
  } catch (const Error& e) {
    std::cerr << "bad run config: " << e.what() << "\n";
    return 2;
  }

  if (output_dir_flag) cfg.output_dir = *output_dir_flag;
  if (const char* root = std::getenv("SLAGFLOW_OUTPUT_ROOT"))
    cfg.output_dir = fs::path(root) / cfg.output_dir.filename();
  if (seed_flag) cfg.base_seed = *seed_flag;
  if (repeats_flag) cfg.repeats_override = *repeats_flag;
  if (epochs_flag) cfg.epochs_override = *epochs_flag;
  if (workers_flag) cfg.workers = *workers_flag;
  if (paper_faithful_flag) cfg.paper_faithful = true;

  DatasetIndex index;
  try {
    index = cfg.manifest ? load_manifest(*cfg.manifest) : generate_synthetic(*cfg.synthetic);
  } catch (const Error& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return 1;
  }

  std::vector<ExperimentConfig> configs;
  if (cfg.selection == "grid")
    configs = hyperparameter_grid();
  else if (cfg.selection == "ablation")
    configs = ablation_suite();
  else
    configs = {*cfg.single};

  for (auto& config : configs) {
    config.settings.seed = cfg.base_seed;
    if (cfg.paper_faithful) {
      apply_paper_faithful(config);
    } else {
      if (cfg.repeats_override) config.repeats = *cfg.repeats_override;
      if (cfg.epochs_override) config.settings.epochs = *cfg.epochs_override;
      if (cfg.test_domains_override) {
        std::vector<FoldSpec> kept;
        for (const auto& fold : config.folds)
          for (const int d : *cfg.test_domains_override)
            if (fold.test_domain == d) kept.push_back(fold);
        if (kept.empty()) {
          std::cerr << "test_domains override leaves no folds for " << config.id
                    << "\n";
          return 2;
        }
        config.folds = kept;
      }
    }
  }

  RunOptions options;
  options.output_dir = cfg.output_dir;
  options.workers = cfg.workers;
  options.resume = !no_resume;
  options.verbose = verbose;

  try {
    for (const auto& config : configs) {
      const ExperimentSummary summary = run_experiment(config, index, options);
      std::cout << config.id << ": mean " << format_mean_std(summary.mean, summary.stdev)
                << " over " << summary.all_points.size() << " runs\n";
    }
  } catch (const Error& e) {
    std::cerr << "experiment failed: " << e.what() << "\n";
    return 1;
  }
  std::cout << "results in " << cfg.output_dir.string() << "\n";
  return 0;
}

int cmd_report(const std::string& results_dir, std::optional<std::string> out_flag) {
  const fs::path results(results_dir);
  if (!fs::is_directory(results)) {
    std::cerr << "results directory not found: " << results_dir << "\n";
    return 1;
  }
  std::vector<ExperimentSummary> summaries;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(results))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const auto aggregate = dir / "aggregate.json";
    if (!fs::exists(aggregate)) continue;
    try {
      std::ifstream in(aggregate);
      std::stringstream buf;
      buf << in.rdbuf();
      summaries.push_back(ExperimentSummary::from_json_string(buf.str()));
    } catch (const Error& e) {
      std::cerr << "skipping corrupted aggregate " << aggregate.string() << ": "
                << e.what() << "\n";
    }
  }
  if (summaries.empty()) {
    std::cerr << "no readable results under " << results_dir << "\n";
    return 1;
  }

  const fs::path out = out_flag ? fs::path(*out_flag) : results / "report";
  fs::create_directories(out / "table");
  fs::create_directories(out / "boxplot");
  fs::create_directories(out / "confusion");

  const ReportTable table = build_table(summaries);
  {
    std::ofstream json_out(out / "table" / "table.json");
    json_out << table.to_json_string() << "\n";
    std::ofstream csv_out(out / "table" / "table.csv");
    csv_out << table.to_csv();
  }

  std::map<std::string, std::vector<double>> points;
  for (const auto& summary : summaries)
    points[summary.config.id] = summary.all_points;
  const auto box = boxplot_data(points);
  {
    std::ofstream json_out(out / "boxplot" / "boxplot.json");
    json_out << boxplot_json(box) << "\n";
    std::ofstream csv_out(out / "boxplot" / "boxplot.csv");
    csv_out << "method,min,q1,median,q3,max,outliers\n";
    for (const auto& [method, stats] : box)
      csv_out << method << ',' << stats.min << ',' << stats.q1 << ',' << stats.median
              << ',' << stats.q3 << ',' << stats.max << ',' << stats.outliers.size()
              << '\n';
  }

  for (const auto& summary : summaries) {
    std::vector<std::string> labels;
    for (const StageLabel c : summary.config.classes)
      labels.push_back(stage_name(c));
    for (const auto& fold : summary.per_fold) {
      if (fold.confusions.empty()) continue;
      // per-fold view: repeats summed
      auto total = fold.confusions.front();
      for (size_t r = 1; r < fold.confusions.size(); ++r)
        for (size_t i = 0; i < total.size(); ++i)
          for (size_t j = 0; j < total[i].size(); ++j)
            total[i][j] += fold.confusions[r][i][j];
      const std::string base =
          summary.config.id + "-domain" + std::to_string(fold.test_domain);
      render_confusion(total, labels, out / "confusion" / (base + ".svg"),
                       out / "confusion" / (base + ".csv"));
    }
  }

  std::cout << "report written to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slag-flow classification pipeline"};
  app.require_subcommand(1);

  std::string manifest;
  auto* validate = app.add_subcommand("validate", "check a dataset manifest");
  validate->add_option("manifest", manifest, "manifest JSON path")->required();

  std::string spec_path, synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("spec", spec_path, "synthetic spec JSON path")->required();
  synth->add_option("out", synth_out, "output directory")->required();

  std::string run_config;
  std::string run_output;
  uint64_t run_seed = 0;
  int run_repeats = 0, run_epochs = 0, run_workers = 0;
  bool paper_faithful = false, no_resume = false, verbose = false;
  auto* run = app.add_subcommand("run", "run experiments from a config file");
  run->add_option("config", run_config, "run config JSON path")->required();
  auto* out_opt = run->add_option("--output-dir", run_output, "results directory");
  auto* seed_opt = run->add_option("--seed", run_seed, "base seed");
  auto* repeats_opt = run->add_option("--repeats", run_repeats, "repeats per fold");
  auto* epochs_opt = run->add_option("--epochs", run_epochs, "epochs per run");
  auto* workers_opt = run->add_option("--workers", run_workers, "parallel jobs");
  run->add_flag("--paper-faithful", paper_faithful,
                "pin repeats=10, epochs=100, lr=0.001, full folds");
  run->add_flag("--no-resume", no_resume, "rerun completed (fold, repeat) keys");
  run->add_flag("--verbose", verbose, "per-run progress on stderr");

  std::string report_dir, report_out;
  auto* report = app.add_subcommand("report", "tables and plots from results");
  report->add_option("results", report_dir, "results directory")->required();
  auto* report_out_opt = report->add_option("--out", report_out, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (validate->parsed()) return cmd_validate(manifest);
    if (synth->parsed()) return cmd_synth(spec_path, synth_out);
    if (run->parsed())
      return cmd_run(run_config,
                     out_opt->count() ? std::optional(run_output) : std::nullopt,
                     seed_opt->count() ? std::optional(run_seed) : std::nullopt,
                     repeats_opt->count() ? std::optional(run_repeats) : std::nullopt,
                     epochs_opt->count() ? std::optional(run_epochs) : std::nullopt,
                     workers_opt->count() ? std::optional(run_workers) : std::nullopt,
                     paper_faithful, no_resume, verbose);
    if (report->parsed())
      return cmd_report(report_dir, report_out_opt->count()
                                        ? std::optional(report_out)
                                        : std::nullopt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
