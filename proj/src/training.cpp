#include "slagflow/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "slagflow/errors.hpp"
#include "slagflow/kernels.hpp"
#include "slagflow/rng.hpp"

namespace slagflow {

using nlohmann::json;

void TrainSettings::validate() const {
  if (learning_rate <= 0.0) throw InvalidArg("learning_rate must be positive");
  if (epochs < 1) throw InvalidArg("epochs must be >= 1");
  if (batch_size < 1) throw InvalidArg("batch_size must be >= 1");
  if (val_fraction <= 0.0 || val_fraction >= 1.0)
    throw InvalidArg("val_fraction must be in (0, 1)");
}

std::string RunResult::to_json_string() const {
  json doc;
  doc["best_epoch"] = best_epoch;
  doc["best_val_acc"] = best_val_acc;
  doc["test_acc_at_best"] = test_acc_at_best;
  doc["confusion_at_best"] = confusion_at_best;
  doc["seed"] = seed;
  doc["final_weights_hash"] = final_weights_hash;
  doc["best_weights_hash"] = best_weights_hash;
  json epochs = json::array();
  for (const auto& e : per_epoch)
    epochs.push_back({{"train_loss", e.train_loss},
                      {"train_acc", e.train_acc},
                      {"val_acc", e.val_acc},
                      {"test_acc", e.test_acc}});
  doc["per_epoch"] = epochs;
  return doc.dump(2);
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<ParamRef>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value->shape);
      v_.emplace_back(p.value->shape);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    float* w = params[i].value->ptr();
    const float* g = params[i].grad->ptr();
    float* m = m_[i].ptr();
    float* v = v_[i].ptr();
    const int64_t n = params[i].value->numel();
    for (int64_t j = 0; j < n; ++j) {
      m[j] = static_cast<float>(beta1_ * m[j] + (1.0 - beta1_) * g[j]);
      v[j] = static_cast<float>(beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j]);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

std::pair<std::vector<LoadedSample>, std::vector<LoadedSample>> split_train_val(
    const std::vector<LoadedSample>& samples, double val_fraction, uint64_t seed) {
  if (val_fraction <= 0.0 || val_fraction >= 1.0)
    throw InvalidArg("val_fraction must be in (0, 1)");

  std::map<StageLabel, std::vector<size_t>> by_class;
  for (size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
  for (const auto& [label, idx] : by_class)
    if (idx.size() < 2)
      throw TooFewSamples("class " + stage_name(label) +
                          " has fewer than 2 samples");

  std::vector<size_t> train_idx, val_idx;
  for (auto& [label, idx] : by_class) {
    Rng rng(mix_seed(seed, "split", static_cast<uint64_t>(label)));
    rng.shuffle(idx);
    const size_t val_count =
        static_cast<size_t>(std::floor(static_cast<double>(idx.size()) * val_fraction));
    for (size_t i = 0; i < idx.size(); ++i)
      (i < val_count ? val_idx : train_idx).push_back(idx[i]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  std::pair<std::vector<LoadedSample>, std::vector<LoadedSample>> out;
  for (const size_t i : train_idx) out.first.push_back(samples[i]);
  for (const size_t i : val_idx) out.second.push_back(samples[i]);
  return out;
}

EvalResult evaluate(Model& model, const std::vector<LoadedSample>& samples,
                    const std::vector<StageLabel>& classes) {
  if (samples.empty()) throw EmptyInput("evaluate called with no samples");
  const int64_t k = static_cast<int64_t>(classes.size());
  EvalResult result;
  result.confusion.assign(static_cast<size_t>(k), std::vector<int64_t>(k, 0));

  constexpr int64_t kEvalBatch = 128;
  int64_t correct = 0;
  for (size_t start = 0; start < samples.size(); start += kEvalBatch) {
    const size_t end = std::min(samples.size(), start + kEvalBatch);
    Batch batch;
    for (size_t i = start; i < end; ++i) {
      batch.samples.push_back(samples[i]);
      batch.labels.push_back(class_index(classes, samples[i].label));
    }
    const Tensor logits = forward(model, batch, Mode::Eval);
    for (int64_t i = 0; i < logits.dim(0); ++i) {
      int64_t pred = 0;
      for (int64_t j = 1; j < logits.dim(1); ++j)
        if (logits(i, j) > logits(i, pred)) pred = j;  // ties -> lowest index
      const int truth = batch.labels[static_cast<size_t>(i)];
      result.confusion[truth][pred] += 1;
      if (pred == truth) ++correct;
    }
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  return result;
}

std::string run_record_json(const TrainSettings& settings,
                            const std::vector<StageLabel>& classes,
                            const RunResult& result) {
  json record = json::parse(result.to_json_string());
  record["schema"] = "slagflow-run-v1";
  json cls = json::array();
  for (const StageLabel c : classes) cls.push_back(std::string(1, stage_code(c)));
  record["classes"] = cls;
  record["settings"] = {
      {"learning_rate", settings.learning_rate},
      {"epochs", settings.epochs},
      {"batch_size", settings.batch_size},
      {"seed", settings.seed},
      {"val_fraction", settings.val_fraction},
      // assumptions baked into the run, spelled out for provenance
      {"val_split", "stratified window-level split by class"},
      {"best_epoch_rule", "max validation accuracy, earliest epoch on ties"},
      {"rms_scope", "per axis over all training-domain signals"},
  };
  return record.dump(2);
}

RunResult train_one_run(const ModelSpec& spec, const std::vector<LoadedSample>& train,
                        const std::vector<LoadedSample>& val,
                        const std::vector<LoadedSample>& test,
                        const TrainSettings& settings,
                        const std::vector<StageLabel>& classes,
                        const std::optional<std::filesystem::path>& artifact_prefix) {
  settings.validate();
  if (train.empty() || val.empty() || test.empty())
    throw EmptySplit("train/val/test must all be non-empty");

  Model model = build_model(spec, mix_seed(settings.seed, "model"));
  model.reseed_dropout(mix_seed(settings.seed, "masks"));
  Adam optimizer(settings.learning_rate);

  RunResult result;
  result.seed = settings.seed;

  std::vector<Tensor> best_weights;
  for (int epoch = 1; epoch <= settings.epochs; ++epoch) {
    const auto batches = make_batches(
        train, settings.batch_size,
        mix_seed(settings.seed, "shuffle", static_cast<uint64_t>(epoch)), classes);

    double loss_sum = 0.0;
    int64_t batch_count = 0;
    for (const auto& batch : batches) {
      const Tensor x = batch.stacked();
      Tensor logits;
      try {
        logits = model.forward(x, Mode::Train);
      } catch (const NonFiniteActivation& e) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << " batch " << batch_count
           << ": " << e.what();
        throw NonFiniteLoss(os.str());
      }
      const int64_t n = logits.dim(0), k = logits.dim(1);
      Tensor probs({n, k});
      const float loss = nn::softmax_xent_forward(logits.ptr(), n, k,
                                                  batch.labels.data(), probs.ptr());
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "training diverged: non-finite loss at epoch " << epoch << " batch "
           << batch_count;
        throw NonFiniteLoss(os.str());
      }
      loss_sum += loss;
      ++batch_count;

      Tensor dlogits({n, k});
      nn::softmax_xent_backward(probs.ptr(), n, k, batch.labels.data(), dlogits.ptr());
      model.zero_grad();
      model.backward(dlogits);
      optimizer.step(model.parameters());
    }

    EpochMetrics metrics;
    metrics.train_loss = batch_count ? loss_sum / static_cast<double>(batch_count) : 0.0;
    try {
      metrics.train_acc = evaluate(model, train, classes).accuracy;
      metrics.val_acc = evaluate(model, val, classes).accuracy;
      if (settings.record_test_per_epoch)
        metrics.test_acc = evaluate(model, test, classes).accuracy;
    } catch (const NonFiniteActivation& e) {
      std::ostringstream os;
      os << "training diverged before epoch " << epoch << " metrics: " << e.what();
      throw NonFiniteLoss(os.str());
    }
    result.per_epoch.push_back(metrics);

    if (result.best_epoch == 0 || metrics.val_acc > result.best_val_acc) {
      result.best_epoch = epoch;
      result.best_val_acc = metrics.val_acc;
      best_weights = model.snapshot_weights();
    }
  }

  result.final_weights_hash = model.parameter_hash();
  model.restore_weights(best_weights);
  result.best_weights_hash = model.parameter_hash();
  const EvalResult best_eval = evaluate(model, test, classes);
  result.test_acc_at_best = best_eval.accuracy;
  result.confusion_at_best = best_eval.confusion;

  if (artifact_prefix) {
    if (artifact_prefix->has_parent_path())
      std::filesystem::create_directories(artifact_prefix->parent_path());
    auto ckpt = *artifact_prefix;
    ckpt += ".ckpt";
    save_checkpoint(model, ckpt);
    auto record = *artifact_prefix;
    record += ".json";
    std::ofstream out(record);
    out << run_record_json(settings, classes, result) << "\n";
  }
  return result;
}

}  // namespace slagflow
