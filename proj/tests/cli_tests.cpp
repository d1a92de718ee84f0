// Drives the installed binary end to end: validate, synth, run, report.
// Prints one line per scenario; exits non-zero on the first failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "support/tempdir.hpp"

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  std::printf("%s  %s\n", ok ? "ok  " : "FAIL", what.c_str());
  if (!ok) ++failures;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SLAGFLOW_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

int main() {
  testsupport::TempDir dir("sf-cli");
  const fs::path spec = dir.path / "spec.json";
  const fs::path data = dir.path / "data";

  write(spec, R"({"num_domains": 16, "samples_per_recording": 640,
                  "sample_rate_hz": 6400, "noise_sigma": 0.05, "seed": 11})");
  check(run_cli("synth " + spec.string() + " " + data.string()) == 0,
        "synth writes a dataset and exits 0");
  check(fs::exists(data / "manifest.json"), "synth writes manifest.json");
  int csv_count = 0;
  for (const auto& entry : fs::directory_iterator(data))
    if (entry.path().extension() == ".csv") ++csv_count;
  check(csv_count == 48, "synth writes 48 recordings");

  check(run_cli("validate " + (data / "manifest.json").string()) == 0,
        "validate accepts the synthesized dataset");

  fs::remove(data / "B-7.csv");
  check(run_cli("validate " + (data / "manifest.json").string()) == 1,
        "validate exits 1 when a file is missing");

  const fs::path bad_manifest = dir.path / "bad.json";
  write(bad_manifest, "{not json");
  check(run_cli("validate " + bad_manifest.string()) == 2,
        "validate exits 2 on a malformed manifest");

  const fs::path bad_spec = dir.path / "bad_spec.json";
  write(bad_spec, R"({"sample_rate_hz": 6400,
                      "tone_table": {"S": {"x": 4000, "y": 140, "z": 160}}})");
  check(run_cli("synth " + bad_spec.string() + " " + (dir.path / "d2").string()) == 2,
        "synth exits 2 on a nyquist-violating spec");

  // a single tiny inline-synthetic experiment
  const fs::path run_cfg = dir.path / "run.json";
  const fs::path results = dir.path / "results";
  write(run_cfg, R"({
    "dataset": {"synthetic": {"num_domains": 3, "samples_per_recording": 512,
                               "noise_sigma": 0.1, "seed": 21}},
    "selection": {"config": {
      "id": "demo", "model": "cnn", "preprocessing": "rms",
      "loading": "single_source", "axes": ["y"], "classes": ["B", "S"],
      "window_length": 128, "batch_size": 8,
      "domains": [1, 2, 3], "test_domains": [3], "repeats": 2,
      "settings": {"epochs": 2}}},
    "output_dir": ")" + results.string() + R"("
  })");
  check(run_cli("run " + run_cfg.string()) == 0, "run executes a single config");
  check(fs::exists(results / "demo" / "3" / "0.json"), "run writes per-run records");
  check(fs::exists(results / "demo" / "aggregate.json"), "run writes the aggregate");

  const std::string record = slurp(results / "demo" / "3" / "0.json");
  check(run_cli("run " + run_cfg.string()) == 0, "rerun over existing results");
  check(slurp(results / "demo" / "3" / "0.json") == record,
        "resume skips completed (fold, repeat) keys");

  check(run_cli("report " + results.string()) == 0, "report renders the results");
  check(fs::exists(results / "report" / "table" / "table.csv"), "report table.csv");
  check(fs::exists(results / "report" / "boxplot" / "boxplot.json"),
        "report boxplot.json");
  check(fs::exists(results / "report" / "confusion" / "demo-domain3.svg"),
        "report per-fold confusion image");

  // a corrupted aggregate is named but does not stop the others
  fs::create_directories(results / "broken");
  write(results / "broken" / "aggregate.json", "{corrupt");
  check(run_cli("report " + results.string()) == 0,
        "report tolerates a corrupted aggregate");

  check(run_cli("report " + (dir.path / "empty").string()) == 1,
        "report exits 1 on a missing results dir");
  fs::create_directories(dir.path / "empty2");
  check(run_cli("report " + (dir.path / "empty2").string()) == 1,
        "report exits 1 on an empty results dir");

  check(run_cli("nonsense") == 2, "unknown subcommands exit 2");

  // SLAGFLOW_OUTPUT_ROOT redirects results
  const fs::path env_root = dir.path / "env_root";
  fs::create_directories(env_root);
  const std::string env_cmd = "SLAGFLOW_OUTPUT_ROOT=" + env_root.string() + " " +
                              std::string(SLAGFLOW_CLI_PATH) + " run " +
                              run_cfg.string() + " >/dev/null 2>&1";
  check(std::system(env_cmd.c_str()) == 0, "run honors SLAGFLOW_OUTPUT_ROOT");
  check(fs::exists(env_root / "results" / "demo" / "aggregate.json"),
        "env override moves the output root");

  // ablation selection, desk-scaled: 10 config directories appear
  const fs::path ablation_cfg = dir.path / "ablation.json";
  const fs::path ablation_results = dir.path / "ablation_results";
  write(ablation_cfg, R"({
    "dataset": {"synthetic": {"num_domains": 16, "samples_per_recording": 1024,
                               "noise_sigma": 0.1, "seed": 22}},
    "selection": "ablation",
    "output_dir": ")" + ablation_results.string() + R"(",
    "overrides": {"repeats": 1, "epochs": 1, "test_domains": [16]}
  })");
  check(run_cli("run " + ablation_cfg.string()) == 0, "ablation selection runs");
  int config_dirs = 0;
  for (const auto& entry : fs::directory_iterator(ablation_results))
    if (entry.is_directory()) ++config_dirs;
  check(config_dirs == 10, "ablation creates 10 config directories");

  // grid selection, desk-scaled: 24 config directories appear
  const fs::path grid_cfg = dir.path / "grid.json";
  const fs::path grid_results = dir.path / "grid_results";
  write(grid_cfg, R"({
    "dataset": {"synthetic": {"num_domains": 16, "samples_per_recording": 2048,
                               "noise_sigma": 0.1, "seed": 23}},
    "selection": "grid",
    "output_dir": ")" + grid_results.string() + R"(",
    "overrides": {"repeats": 1, "epochs": 1}
  })");
  check(run_cli("run " + grid_cfg.string()) == 0, "grid selection runs");
  config_dirs = 0;
  for (const auto& entry : fs::directory_iterator(grid_results))
    if (entry.is_directory()) ++config_dirs;
  check(config_dirs == 24, "grid creates 24 config directories");

  std::printf(failures == 0 ? "all cli scenarios passed\n"
                            : "%d cli scenario(s) failed\n",
              failures);
  return failures == 0 ? 0 : 1;
}
