#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "slagflow/dataset.hpp"
#include "slagflow/loading.hpp"
#include "slagflow/model.hpp"
#include "slagflow/preprocessing.hpp"
#include "slagflow/training.hpp"

namespace slagflow {

struct FoldSpec {
  int test_domain = 0;
  std::set<int> train_domains;
};

// One fold per domain, test = that domain, train = all others; ordered by
// test domain descending.
std::vector<FoldSpec> cross_domain_folds(const std::set<int>& domains);

enum class Preproc { None, ZScore, Rms };
enum class Loading { SingleSource, Parallel, SelectiveEmbedding };

std::string preproc_name(Preproc p);
Preproc preproc_from_name(const std::string& name);
std::string loading_name(Loading l);
Loading loading_from_name(const std::string& name);

struct ExperimentConfig {
  std::string id;
  ModelKind model_kind = ModelKind::CnnLstm;
  Preproc preprocessing = Preproc::Rms;
  Loading loading = Loading::SingleSource;
  std::vector<std::string> axes = {"y"};
  std::vector<StageLabel> classes = {StageLabel::BeforeSlag, StageLabel::DuringSlag};
  int window_length = 512;
  int batch_size = 64;
  std::vector<FoldSpec> folds;
  int repeats = 10;
  TrainSettings settings;

  void validate() const;
  std::string to_json_string() const;
  static ExperimentConfig from_json_string(const std::string& text);
};

// Per (config, fold) aggregation over repeats.
struct AggregateResult {
  std::string config_id;
  int test_domain = 0;
  std::vector<double> accs;  // test_acc_at_best per repeat
  double mean = 0.0;
  double stdev = 0.0;  // sample (n-1); 0 with std_undefined when n == 1
  bool std_undefined = false;
  std::vector<std::vector<std::vector<int64_t>>> confusions;  // per repeat
};

struct ExperimentSummary {
  ExperimentConfig config;
  std::vector<AggregateResult> per_fold;
  std::vector<double> all_points;  // fold-major, repeat-minor
  double mean = 0.0;
  double stdev = 0.0;
  bool std_undefined = false;

  std::string to_json_string() const;
  static ExperimentSummary from_json_string(const std::string& text);
};

struct RunOptions {
  std::optional<std::filesystem::path> output_dir;  // results root
  int workers = 1;
  bool resume = true;
  bool verbose = false;
};

struct MaterializedFold {
  std::vector<LoadedSample> train_val;
  std::vector<LoadedSample> test;
  std::optional<Normalizer> normalizer;  // RMS preprocessing only
};

// Full data pipeline for one fold: read -> preprocess (train-fitted) ->
// window -> loading strategy, pooled by domain.
MaterializedFold materialize_fold(const DatasetIndex& index,
                                  const ExperimentConfig& config,
                                  const FoldSpec& fold);

// Runs repeats x folds (seeds are base + repeat index), writes per-run JSON +
// checkpoint and an aggregate per config when output_dir is set; completed
// (fold, repeat) keys are skipped on resume.
ExperimentSummary run_experiment(const ExperimentConfig& config,
                                 const DatasetIndex& index,
                                 const RunOptions& options = {});

// The 24 grid configurations: model x preprocessing x batch size x window
// length, y-axis single-source, two classes, fold test=16.
std::vector<ExperimentConfig> hyperparameter_grid();

// The declarative feature matrix behind the ablation suite.
struct AblationRow {
  const char* id;
  bool cnn;
  bool lstm;
  bool rms;
  bool axis_x;
  bool axis_y;
  bool axis_z;
  int num_classes;
  const char* loading;
  const char* description;
};
const std::array<AblationRow, 10>& ablation_matrix();

// A1..A8 plus M9 (selective embedding) and M10 (parallel multi-channel),
// batch 64, window 512, each over all 16 folds.
std::vector<ExperimentConfig> ablation_suite();

// Pins the full-scale protocol: repeats=10, epochs=100, lr=0.001, all folds.
void apply_paper_faithful(ExperimentConfig& config);

double mean_of(const std::vector<double>& values);
double sample_std(const std::vector<double>& values);

}  // namespace slagflow
