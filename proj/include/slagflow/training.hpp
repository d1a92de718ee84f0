#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slagflow/loading.hpp"
#include "slagflow/model.hpp"

namespace slagflow {

struct TrainSettings {
  double learning_rate = 0.001;
  int epochs = 100;
  int batch_size = 64;
  uint64_t seed = 42;
  double val_fraction = 0.2;
  // per-epoch test evaluation is read-only; disabling it must not change the
  // weight trajectory (asserted by tests)
  bool record_test_per_epoch = true;

  void validate() const;
};

struct EpochMetrics {
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = -1.0;  // -1 when not recorded
};

struct RunResult {
  std::vector<EpochMetrics> per_epoch;
  int best_epoch = 0;  // 1-based
  double best_val_acc = 0.0;
  double test_acc_at_best = 0.0;
  std::vector<std::vector<int64_t>> confusion_at_best;
  uint64_t seed = 0;
  uint64_t final_weights_hash = 0;
  uint64_t best_weights_hash = 0;

  std::string to_json_string() const;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<int64_t>> confusion;
};

// Adaptive-moment first-order optimizer with the usual decay constants.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(const std::vector<ParamRef>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Stratified-by-class deterministic split; returns (train, val).
std::pair<std::vector<LoadedSample>, std::vector<LoadedSample>> split_train_val(
    const std::vector<LoadedSample>& samples, double val_fraction, uint64_t seed);

EvalResult evaluate(Model& model, const std::vector<LoadedSample>& samples,
                    const std::vector<StageLabel>& classes);

// One full training run: cross-entropy + Adam, per-epoch metrics in eval mode,
// best epoch by validation accuracy (ties -> earliest). When artifact_prefix
// is set, writes <prefix>.json (settings + per-epoch metrics + best-epoch
// summary) and <prefix>.ckpt (best-epoch weights).
RunResult train_one_run(const ModelSpec& spec, const std::vector<LoadedSample>& train,
                        const std::vector<LoadedSample>& val,
                        const std::vector<LoadedSample>& test,
                        const TrainSettings& settings,
                        const std::vector<StageLabel>& classes,
                        const std::optional<std::filesystem::path>& artifact_prefix = {});

// The on-disk per-run record.
std::string run_record_json(const TrainSettings& settings,
                            const std::vector<StageLabel>& classes,
                            const RunResult& result);

}  // namespace slagflow
