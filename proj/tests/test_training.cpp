#include <doctest.h>

#include <cmath>
#include <set>

#include "slagflow/dataset.hpp"
#include "slagflow/experiments.hpp"
#include "slagflow/kernels.hpp"
#include "slagflow/training.hpp"
#include "support/tempdir.hpp"

using namespace slagflow;
using testsupport::TempDir;

namespace {

// Small separable two-class set from the tone generator: windows_per_class
// single-source y-axis windows per stage.
std::vector<LoadedSample> tone_samples(int64_t window_length, int windows_per_class,
                                       uint64_t seed, double noise_sigma = 0.1) {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.num_domains = 1;
  spec.samples_per_recording = window_length * windows_per_class;
  spec.noise_sigma = noise_sigma;
  spec.seed = seed;
  const DatasetIndex index = generate_synthetic(spec);

  std::vector<LoadedSample> out;
  for (const auto& entry : index.entries) {
    if (entry.stage == StageLabel::EarlyNoSlag) continue;
    const SensorRecording rec = read_recording(index, entry);
    const auto windows = window_signal(*rec.axis("y"), window_length, rec.stage,
                                       rec.domain_id, "y");
    const auto samples = load_single_source(windows, "y");
    out.insert(out.end(), samples.begin(), samples.end());
  }
  return out;
}

const std::vector<StageLabel> kTwoClasses = {StageLabel::BeforeSlag,
                                             StageLabel::DuringSlag};

// Zero-crossing rate (after light smoothing to suppress noise jitter around
// the crossings) separates the tone classes without any learning; this is the
// independent separability oracle behind the convergence expectations.
double nearest_centroid_accuracy(const std::vector<LoadedSample>& samples) {
  const auto crossings = [](const LoadedSample& s) {
    constexpr int64_t kHalf = 4;
    std::vector<double> smooth(static_cast<size_t>(s.length()));
    for (int64_t t = 0; t < s.length(); ++t) {
      double acc = 0;
      int64_t n = 0;
      for (int64_t k = std::max<int64_t>(0, t - kHalf);
           k < std::min(s.length(), t + kHalf + 1); ++k) {
        acc += s.tensor(0, k);
        ++n;
      }
      smooth[t] = acc / static_cast<double>(n);
    }
    int count = 0;
    for (size_t t = 1; t < smooth.size(); ++t)
      if ((smooth[t] >= 0.0) != (smooth[t - 1] >= 0.0)) ++count;
    return static_cast<double>(count);
  };
  double centroid[2] = {0.0, 0.0};
  int counts[2] = {0, 0};
  for (const auto& s : samples) {
    const int c = s.label == StageLabel::BeforeSlag ? 0 : 1;
    centroid[c] += crossings(s);
    counts[c] += 1;
  }
  centroid[0] /= counts[0];
  centroid[1] /= counts[1];
  int correct = 0;
  for (const auto& s : samples) {
    const double f = crossings(s);
    const int pred = std::fabs(f - centroid[0]) <= std::fabs(f - centroid[1]) ? 0 : 1;
    if (pred == (s.label == StageLabel::BeforeSlag ? 0 : 1)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("the synthetic two-class set is separable by a trivial oracle") {
  const auto samples = tone_samples(512, 40, 5);
  CHECK(nearest_centroid_accuracy(samples) >= 0.99);
}

TEST_CASE("stratified split honors fractions per class") {
  const auto samples = tone_samples(128, 100, 6);
  REQUIRE(samples.size() == 200);
  const auto [train, val] = split_train_val(samples, 0.2, 77);
  CHECK(train.size() == 160);
  CHECK(val.size() == 40);
  int val_before = 0;
  for (const auto& s : val)
    if (s.label == StageLabel::BeforeSlag) ++val_before;
  CHECK(val_before == 20);

  // disjoint and exhaustive: window indices per class partition the input
  std::multiset<std::pair<int, int64_t>> seen;
  for (const auto& s : train)
    seen.insert({s.label == StageLabel::BeforeSlag ? 0 : 1, s.prov.window_index});
  for (const auto& s : val)
    seen.insert({s.label == StageLabel::BeforeSlag ? 0 : 1, s.prov.window_index});
  CHECK(seen.size() == samples.size());
  std::set<std::pair<int, int64_t>> unique(seen.begin(), seen.end());
  CHECK(unique.size() == samples.size());
}

TEST_CASE("a two-sample class splits one-and-one at half fraction") {
  auto samples = tone_samples(128, 2, 7);
  REQUIRE(samples.size() == 4);
  const auto [train, val] = split_train_val(samples, 0.5, 1);
  CHECK(train.size() == 2);
  CHECK(val.size() == 2);
}

TEST_CASE("split is deterministic and rejects starving classes") {
  const auto samples = tone_samples(128, 10, 8);
  const auto a = split_train_val(samples, 0.2, 42);
  const auto b = split_train_val(samples, 0.2, 42);
  REQUIRE(a.first.size() == b.first.size());
  for (size_t i = 0; i < a.first.size(); ++i)
    CHECK(a.first[i].prov.window_index == b.first[i].prov.window_index);

  const auto single = tone_samples(128, 1, 9);
  CHECK_THROWS_AS(split_train_val(single, 0.5, 1), TooFewSamples);
}

TEST_CASE("evaluate reports accuracy consistent with its confusion matrix") {
  const auto samples = tone_samples(128, 12, 10);
  Model model = build_cnn(1, 2, 3);
  const EvalResult result = evaluate(model, samples, kTwoClasses);
  int64_t total = 0, trace = 0;
  REQUIRE(result.confusion.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    int64_t row = 0;
    for (size_t j = 0; j < 2; ++j) {
      total += result.confusion[i][j];
      row += result.confusion[i][j];
      if (i == j) trace += result.confusion[i][j];
      CHECK(result.confusion[i][j] >= 0);
    }
    CHECK(row == 12);  // per-class test counts
  }
  CHECK(total == static_cast<int64_t>(samples.size()));
  CHECK(result.accuracy ==
        static_cast<double>(trace) / static_cast<double>(total));
  CHECK(result.accuracy >= 0.0);
  CHECK(result.accuracy <= 1.0);
  CHECK_THROWS_AS(evaluate(model, {}, kTwoClasses), EmptyInput);
}

TEST_CASE("fresh models start near the ln K cross-entropy baseline") {
  const auto samples = tone_samples(128, 24, 11);
  for (const ModelKind kind : {ModelKind::Cnn, ModelKind::CnnLstm}) {
    ModelSpec spec;
    spec.kind = kind;
    spec.in_channels = 1;
    spec.num_classes = 2;
    Model model = build_model(spec, 99);
    const auto batches = make_batches(samples, 48, std::nullopt, kTwoClasses);
    const Tensor logits = forward(model, batches.front(), Mode::Eval);
    Tensor probs(logits.shape);
    const float loss =
        nn::softmax_xent_forward(logits.ptr(), logits.dim(0), logits.dim(1),
                                 batches.front().labels.data(), probs.ptr());
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(0.2));
  }
}

TEST_CASE("train_one_run learns the separable set and fills the record") {
  const auto all = tone_samples(128, 30, 12);
  const auto [train_val, test_overflow] = split_train_val(all, 0.25, 5);
  const auto [train, val] = split_train_val(train_val, 0.25, 6);

  ModelSpec spec;
  spec.kind = ModelKind::Cnn;
  spec.in_channels = 1;
  spec.num_classes = 2;

  TrainSettings settings;
  settings.epochs = 8;
  settings.batch_size = 8;
  settings.seed = 42;

  const RunResult result =
      train_one_run(spec, train, val, test_overflow, settings, kTwoClasses);
  CHECK(result.per_epoch.size() == 8);
  CHECK(result.best_epoch >= 1);
  CHECK(result.best_epoch <= 8);
  double best_val = 0.0;
  for (const auto& e : result.per_epoch) {
    CHECK(e.train_acc >= 0.0);
    CHECK(e.train_acc <= 1.0);
    CHECK(e.val_acc >= 0.0);
    CHECK(e.val_acc <= 1.0);
    CHECK(e.test_acc >= 0.0);
    CHECK(e.test_acc <= 1.0);
    best_val = std::max(best_val, e.val_acc);
  }
  CHECK(result.best_val_acc == best_val);
  CHECK(result.test_acc_at_best ==
        result.per_epoch[result.best_epoch - 1].test_acc);
  CHECK(result.per_epoch.back().train_acc >= 0.9);
}

TEST_CASE("single-epoch runs pick epoch one") {
  const auto all = tone_samples(128, 8, 13);
  const auto [train_val, test] = split_train_val(all, 0.25, 1);
  const auto [train, val] = split_train_val(train_val, 0.25, 2);
  ModelSpec spec;
  spec.kind = ModelKind::Cnn;
  spec.in_channels = 1;
  spec.num_classes = 2;
  TrainSettings settings;
  settings.epochs = 1;
  settings.batch_size = 8;
  const RunResult result = train_one_run(spec, train, val, test, settings, kTwoClasses);
  CHECK(result.best_epoch == 1);
}

TEST_CASE("identical seeds give identical runs") {
  const auto all = tone_samples(128, 10, 14);
  const auto [train_val, test] = split_train_val(all, 0.25, 3);
  const auto [train, val] = split_train_val(train_val, 0.25, 4);
  ModelSpec spec;
  spec.kind = ModelKind::Cnn;
  spec.in_channels = 1;
  spec.num_classes = 2;
  TrainSettings settings;
  settings.epochs = 3;
  settings.batch_size = 8;
  settings.seed = 4242;

  const RunResult a = train_one_run(spec, train, val, test, settings, kTwoClasses);
  const RunResult b = train_one_run(spec, train, val, test, settings, kTwoClasses);
  REQUIRE(a.per_epoch.size() == b.per_epoch.size());
  for (size_t i = 0; i < a.per_epoch.size(); ++i) {
    CHECK(a.per_epoch[i].train_loss == b.per_epoch[i].train_loss);
    CHECK(a.per_epoch[i].train_acc == b.per_epoch[i].train_acc);
    CHECK(a.per_epoch[i].val_acc == b.per_epoch[i].val_acc);
    CHECK(a.per_epoch[i].test_acc == b.per_epoch[i].test_acc);
  }
  CHECK(a.final_weights_hash == b.final_weights_hash);
  CHECK(a.best_weights_hash == b.best_weights_hash);
}

TEST_CASE("test evaluation never feeds back into the weights") {
  const auto all = tone_samples(128, 10, 15);
  const auto [train_val, test] = split_train_val(all, 0.25, 7);
  const auto [train, val] = split_train_val(train_val, 0.25, 8);
  ModelSpec spec;
  spec.kind = ModelKind::Cnn;
  spec.in_channels = 1;
  spec.num_classes = 2;
  TrainSettings settings;
  settings.epochs = 3;
  settings.batch_size = 8;

  TrainSettings no_test = settings;
  no_test.record_test_per_epoch = false;

  const RunResult with_test =
      train_one_run(spec, train, val, test, settings, kTwoClasses);
  const RunResult without_test =
      train_one_run(spec, train, val, test, no_test, kTwoClasses);
  CHECK(with_test.final_weights_hash == without_test.final_weights_hash);
  CHECK(with_test.best_weights_hash == without_test.best_weights_hash);
  CHECK(with_test.test_acc_at_best == without_test.test_acc_at_best);
  CHECK(without_test.per_epoch.front().test_acc == -1.0);
}

TEST_CASE("the saved best checkpoint reproduces test accuracy exactly") {
  TempDir dir("sf-training");
  const auto all = tone_samples(128, 12, 16);
  const auto [train_val, test] = split_train_val(all, 0.25, 9);
  const auto [train, val] = split_train_val(train_val, 0.25, 10);
  ModelSpec spec;
  spec.kind = ModelKind::Cnn;
  spec.in_channels = 1;
  spec.num_classes = 2;
  TrainSettings settings;
  settings.epochs = 3;
  settings.batch_size = 8;

  const auto prefix = dir.path / "run0";
  const RunResult result =
      train_one_run(spec, train, val, test, settings, kTwoClasses, prefix);
  CHECK(std::filesystem::exists(dir.path / "run0.json"));
  Model restored = load_checkpoint(dir.path / "run0.ckpt");
  CHECK(restored.parameter_hash() == result.best_weights_hash);
  const EvalResult eval = evaluate(restored, test, kTwoClasses);
  CHECK(eval.accuracy == result.test_acc_at_best);
  CHECK(eval.confusion == result.confusion_at_best);
}

TEST_CASE("divergence aborts the run with a diagnostic") {
  const auto all = tone_samples(128, 10, 17);
  const auto [train_val, test] = split_train_val(all, 0.25, 11);
  const auto [train, val] = split_train_val(train_val, 0.25, 12);
  ModelSpec spec;
  spec.kind = ModelKind::Cnn;
  spec.in_channels = 1;
  spec.num_classes = 2;
  TrainSettings settings;
  settings.epochs = 10;
  settings.batch_size = 8;
  settings.learning_rate = 1e12;
  CHECK_THROWS_AS(train_one_run(spec, train, val, test, settings, kTwoClasses),
                  NonFiniteLoss);
}

TEST_CASE("settings validation rejects bad values") {
  TrainSettings s;
  s.learning_rate = 0.0;
  CHECK_THROWS_AS(s.validate(), InvalidArg);
  s = TrainSettings{};
  s.epochs = 0;
  CHECK_THROWS_AS(s.validate(), InvalidArg);
  s = TrainSettings{};
  s.val_fraction = 1.0;
  CHECK_THROWS_AS(s.validate(), InvalidArg);
  const auto all = tone_samples(128, 4, 18);
  ModelSpec spec;
  spec.kind = ModelKind::Cnn;
  spec.in_channels = 1;
  spec.num_classes = 2;
  CHECK_THROWS_AS(train_one_run(spec, {}, all, all, TrainSettings{}, kTwoClasses),
                  EmptySplit);
}

}  // TEST_SUITE
