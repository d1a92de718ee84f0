#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "slagflow/model.hpp"
#include "slagflow/rng.hpp"
#include "support/tempdir.hpp"

using namespace slagflow;
using testsupport::TempDir;

namespace {

Tensor random_input(int64_t n, int64_t c, int64_t l, uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, c, l});
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

std::vector<int64_t> shape_of(Model& model, const std::string& layer) {
  for (const auto& [name, shape] : model.layer_output_shapes())
    if (name == layer) return shape;
  return {};
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("cnn produces the expected feature map and logit shapes") {
  Model model = build_cnn(1, 3, 7);
  const Tensor logits = model.forward(random_input(4, 1, 512, 1), Mode::Eval);
  CHECK(shape_of(model, "conv1") == std::vector<int64_t>{4, 16, 498});
  CHECK(shape_of(model, "conv2") == std::vector<int64_t>{4, 32, 496});
  CHECK(shape_of(model, "pool2") == std::vector<int64_t>{4, 32, 248});
  CHECK(shape_of(model, "conv3") == std::vector<int64_t>{4, 64, 246});
  CHECK(shape_of(model, "conv4") == std::vector<int64_t>{4, 128, 244});
  CHECK(shape_of(model, "adaptive_pool") == std::vector<int64_t>{4, 128, 4});
  CHECK(shape_of(model, "flatten") == std::vector<int64_t>{4, 512});
  CHECK(logits.shape == std::vector<int64_t>{4, 3});
}

TEST_CASE("cnn-lstm produces the expected conv-stack and logit shapes") {
  Model model = build_cnn_lstm(1, 3, 7);
  const Tensor logits = model.forward(random_input(4, 1, 512, 2), Mode::Eval);
  CHECK(shape_of(model, "conv1") == std::vector<int64_t>{4, 32, 514});
  CHECK(shape_of(model, "conv2") == std::vector<int64_t>{4, 64, 516});
  CHECK(shape_of(model, "pool2") == std::vector<int64_t>{4, 64, 258});
  CHECK(shape_of(model, "conv3") == std::vector<int64_t>{4, 128, 258});
  CHECK(shape_of(model, "conv4") == std::vector<int64_t>{4, 256, 258});
  CHECK(shape_of(model, "adaptive_pool") == std::vector<int64_t>{4, 256, 1});
  CHECK(shape_of(model, "lstm") == std::vector<int64_t>{4, 200});
  CHECK(logits.shape == std::vector<int64_t>{4, 3});
}

TEST_CASE("logit shape is stable across window lengths") {
  for (const int64_t length : {512, 1024, 2048}) {
    Model cnn = build_cnn(1, 2, 3);
    CHECK(cnn.forward(random_input(2, 1, length, 4), Mode::Eval).shape ==
          std::vector<int64_t>{2, 2});
    CHECK(shape_of(cnn, "adaptive_pool") == std::vector<int64_t>{2, 128, 4});
    Model hybrid = build_cnn_lstm(1, 2, 3);
    CHECK(hybrid.forward(random_input(2, 1, length, 4), Mode::Eval).shape ==
          std::vector<int64_t>{2, 2});
    CHECK(shape_of(hybrid, "adaptive_pool") == std::vector<int64_t>{2, 256, 1});
  }
}

TEST_CASE("multi-channel inputs drive the first conv") {
  Model model = build_cnn(3, 2, 9);
  const Tensor logits = model.forward(random_input(2, 3, 512, 5), Mode::Eval);
  CHECK(logits.shape == std::vector<int64_t>{2, 2});
  CHECK_THROWS_AS(model.forward(random_input(2, 1, 512, 5), Mode::Eval), ShapeError);
}

TEST_CASE("too-short inputs raise a shape error in the conv stack") {
  Model model = build_cnn(1, 2, 11);
  CHECK_THROWS_AS(model.forward(random_input(2, 1, 16, 6), Mode::Eval), ShapeError);
}

TEST_CASE("eval forward is deterministic; train dropout is not a no-op") {
  Model model = build_cnn_lstm(1, 2, 13);
  const Tensor x = random_input(3, 1, 512, 7);
  const Tensor a = model.forward(x, Mode::Eval);
  const Tensor b = model.forward(x, Mode::Eval);
  CHECK(a.data == b.data);

  const Tensor t1 = model.forward(x, Mode::Train);
  const Tensor t2 = model.forward(x, Mode::Train);
  bool any_diff = false;
  for (size_t i = 0; i < t1.data.size(); ++i)
    if (t1.data[i] != t2.data[i]) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("zero weights give zero logits") {
  Model model = build_cnn(1, 3, 17);
  for (const auto& p : model.parameters()) p.value->fill(0.0f);
  const Tensor logits = model.forward(random_input(2, 1, 512, 8), Mode::Eval);
  for (const float v : logits.data) CHECK(v == 0.0f);
}

TEST_CASE("non-finite activations are reported") {
  Model model = build_cnn(1, 2, 19);
  for (const auto& p : model.parameters())
    if (p.name == "fc3.b") p.value->data[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(model.forward(random_input(1, 1, 512, 9), Mode::Eval),
                  NonFiniteActivation);
}

TEST_CASE("parameter counts follow the conv formula and are stable") {
  Model one = build_cnn(1, 3, 21);
  Model three = build_cnn(3, 3, 22);
  std::map<std::string, int64_t> counts_one, counts_three;
  for (const auto& p : one.parameters()) counts_one[p.name] = p.value->numel();
  for (const auto& p : three.parameters()) counts_three[p.name] = p.value->numel();
  CHECK(counts_one["conv1.w"] + counts_one["conv1.b"] == 256);    // 16*(1*15)+16
  CHECK(counts_three["conv1.w"] + counts_three["conv1.b"] == 736);  // 16*(3*15)+16

  Model again = build_cnn(1, 3, 23);
  CHECK(count_parameters(one) == count_parameters(again));

  Model a = build_cnn_lstm(1, 3, 5);
  Model b = build_cnn_lstm(1, 3, 5);
  CHECK(a.parameter_hash() == b.parameter_hash());
  CHECK(count_parameters(a) == count_parameters(b));
}

TEST_CASE("the recurrence length flag stretches the pooled sequence") {
  ModelSpec spec;
  spec.kind = ModelKind::CnnLstm;
  spec.in_channels = 1;
  spec.num_classes = 2;
  spec.lstm_seq_len = 4;
  Model model = build_model(spec, 3);
  const Tensor x = random_input(2, 1, 512, 5);
  model.forward(x, Mode::Eval);
  CHECK(shape_of(model, "adaptive_pool") == std::vector<int64_t>{2, 256, 4});
  CHECK(shape_of(model, "lstm") == std::vector<int64_t>{2, 200});

  // backprop through the multi-step recurrence stays finite
  const Tensor logits = model.forward(x, Mode::Train);
  Tensor dlogits(logits.shape);
  dlogits.fill(0.5f);
  model.zero_grad();
  const Tensor dx = model.backward(dlogits);
  CHECK(dx.shape == x.shape);
  for (const float v : dx.data) CHECK(std::isfinite(v));
}

TEST_CASE("builder argument validation") {
  CHECK_THROWS_AS(build_cnn(0, 2, 1), InvalidArg);
  CHECK_THROWS_AS(build_cnn(1, 1, 1), InvalidArg);
  CHECK_THROWS_AS(build_cnn_lstm(1, 3, 1, 0), InvalidArg);
}

TEST_CASE("softmax probabilities: closed forms and invariants") {
  const auto uniform = softmax_probs(std::vector<double>{0.0, 0.0, 0.0});
  for (const double p : uniform) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  const auto two = softmax_probs(std::vector<double>{std::log(2.0), 0.0});
  CHECK(two[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(two[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Rng rng(91);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(2 + rng.bounded(6));
    for (auto& v : logits) v = rng.uniform(-30.0, 30.0);
    const auto p = softmax_probs(logits);
    double sum = 0.0;
    size_t argmax_p = 0, argmax_l = 0;
    for (size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] >= 0.0);
      CHECK(p[i] <= 1.0);
      sum += p[i];
      if (p[i] > p[argmax_p]) argmax_p = i;
      if (logits[i] > logits[argmax_l]) argmax_l = i;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-6);
    CHECK(argmax_p == argmax_l);

    const double shift = rng.uniform(-100.0, 100.0);
    std::vector<double> shifted = logits;
    for (auto& v : shifted) v += shift;
    const auto q = softmax_probs(shifted);
    for (size_t i = 0; i < p.size(); ++i) CHECK(std::fabs(p[i] - q[i]) < 1e-9);
  }

  CHECK_THROWS_AS(softmax_probs(std::vector<double>{
                      1.0, std::numeric_limits<double>::infinity()}),
                  NonFiniteInput);
}

TEST_CASE("predict_proba normalizes model logits row-wise") {
  Model model = build_cnn(1, 3, 29);
  const Tensor logits = model.forward(random_input(5, 1, 512, 10), Mode::Eval);
  const TensorT<double> probs = predict_proba(logits);
  for (int64_t i = 0; i < probs.dim(0); ++i) {
    double sum = 0.0;
    for (int64_t j = 0; j < probs.dim(1); ++j) sum += probs(i, j);
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("checkpoints round-trip weights and eval behavior bit-exactly") {
  TempDir dir("sf-models");
  Model model = build_cnn_lstm(1, 3, 31);
  // train-mode forward so batch-norm running stats move away from defaults
  model.forward(random_input(4, 1, 512, 11), Mode::Train);
  const Tensor x = random_input(3, 1, 512, 12);
  const Tensor before = model.forward(x, Mode::Eval);
  const uint64_t hash_before = model.parameter_hash();

  const auto path = dir.path / "model.ckpt";
  save_checkpoint(model, path);
  Model loaded = load_checkpoint(path);
  CHECK(loaded.spec().kind == ModelKind::CnnLstm);
  CHECK(loaded.parameter_hash() == hash_before);
  const Tensor after = loaded.forward(x, Mode::Eval);
  CHECK(after.data == before.data);
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir("sf-models");
  const auto path = dir.path / "bad.ckpt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "garbage";
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
}

}  // TEST_SUITE
