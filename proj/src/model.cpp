#include "slagflow/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "slagflow/errors.hpp"
#include "slagflow/kernels.hpp"
#include "slagflow/lstm.hpp"
#include "slagflow/rng.hpp"

namespace slagflow {

using nlohmann::json;
using nn::Exec;

std::string model_kind_name(ModelKind kind) {
  return kind == ModelKind::Cnn ? "cnn" : "cnn_lstm";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "cnn") return ModelKind::Cnn;
  if (name == "cnn_lstm") return ModelKind::CnnLstm;
  throw ParseError("unknown model kind '" + name + "'");
}

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void params(std::vector<ParamRef>&) {}
  virtual void state(std::vector<StateRef>&) {}
  virtual void reseed(uint64_t) {}

 private:
  std::string name_;
};

namespace {

void init_uniform(Tensor& t, Rng& rng, double bound) {
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
}

class Conv1dLayer final : public Layer {
 public:
  Conv1dLayer(std::string name, int64_t cin, int64_t cout, int64_t k, int64_t pad,
              Rng& rng)
      : Layer(std::move(name)),
        cin_(cin),
        cout_(cout),
        k_(k),
        pad_(pad),
        w_({cout, cin, k}),
        b_({cout}),
        gw_({cout, cin, k}),
        gb_({cout}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k));
    init_uniform(w_, rng, bound);
    init_uniform(b_, rng, bound);
  }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 3 || x.dim(1) != cin_)
      throw ShapeError(name() + ": expected [N," + std::to_string(cin_) +
                       ",L] input, got " + shape_str(x.shape));
    const int64_t lout = x.dim(2) + 2 * pad_ - k_ + 1;
    if (lout < 1)
      throw ShapeError(name() + ": input length " + std::to_string(x.dim(2)) +
                       " too short for kernel " + std::to_string(k_));
    x_ = x;
    Tensor y({x.dim(0), cout_, lout});
    nn::conv1d_forward(x.ptr(), x.dim(0), cin_, x.dim(2), w_.ptr(), b_.ptr(), cout_,
                       k_, pad_, y.ptr());
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    nn::conv1d_backward_filter(dy.ptr(), x_.ptr(), x_.dim(0), cin_, x_.dim(2), cout_,
                               k_, pad_, gw_.ptr(), gb_.ptr());
    Tensor dx(x_.shape);
    nn::conv1d_backward_data(dy.ptr(), x_.dim(0), cout_, dy.dim(2), w_.ptr(), cin_,
                             k_, pad_, x_.dim(2), dx.ptr());
    return dx;
  }

  void params(std::vector<ParamRef>& out) override {
    out.push_back({name() + ".w", &w_, &gw_});
    out.push_back({name() + ".b", &b_, &gb_});
  }

 private:
  int64_t cin_, cout_, k_, pad_;
  Tensor w_, b_, gw_, gb_;
  Tensor x_;
};

class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(std::string name, int64_t channels)
      : Layer(std::move(name)),
        c_(channels),
        gamma_({channels}),
        beta_({channels}),
        ggamma_({channels}),
        gbeta_({channels}),
        running_mean_({channels}),
        running_var_({channels}),
        invstd_({channels}) {
    gamma_.fill(1.0f);
    running_var_.fill(1.0f);
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    if ((x.rank() != 2 && x.rank() != 3) || x.dim(1) != c_)
      throw ShapeError(name() + ": expected " + std::to_string(c_) +
                       "-channel input, got " + shape_str(x.shape));
    const int64_t n = x.dim(0);
    const int64_t l = x.rank() == 3 ? x.dim(2) : 1;
    last_mode_ = mode;
    Tensor y(x.shape);
    if (mode == Mode::Train) {
      xhat_ = Tensor(x.shape);
      nn::bn_forward_train(x.ptr(), n, c_, l, gamma_.ptr(), beta_.ptr(), 0.1f, 1e-5f,
                           y.ptr(), xhat_.ptr(), invstd_.ptr(), running_mean_.ptr(),
                           running_var_.ptr());
    } else {
      nn::bn_forward_eval(x.ptr(), n, c_, l, gamma_.ptr(), beta_.ptr(),
                          running_mean_.ptr(), running_var_.ptr(), 1e-5f, y.ptr());
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    if (last_mode_ != Mode::Train)
      throw ShapeError(name() + ": backward without a train-mode forward");
    const int64_t n = dy.dim(0);
    const int64_t l = dy.rank() == 3 ? dy.dim(2) : 1;
    Tensor dx(dy.shape);
    nn::bn_backward(dy.ptr(), n, c_, l, gamma_.ptr(), xhat_.ptr(), invstd_.ptr(),
                    dx.ptr(), ggamma_.ptr(), gbeta_.ptr());
    return dx;
  }

  void params(std::vector<ParamRef>& out) override {
    out.push_back({name() + ".gamma", &gamma_, &ggamma_});
    out.push_back({name() + ".beta", &beta_, &gbeta_});
  }

  void state(std::vector<StateRef>& out) override {
    out.push_back({name() + ".running_mean", &running_mean_});
    out.push_back({name() + ".running_var", &running_var_});
  }

 private:
  int64_t c_;
  Tensor gamma_, beta_, ggamma_, gbeta_;
  Tensor running_mean_, running_var_;
  Tensor invstd_, xhat_;
  Mode last_mode_ = Mode::Eval;
};

class ReluLayer final : public Layer {
 public:
  explicit ReluLayer(std::string name) : Layer(std::move(name)) {}

  Tensor forward(const Tensor& x, Mode) override {
    y_ = Tensor(x.shape);
    nn::relu_forward(x.ptr(), x.numel(), y_.ptr());
    return y_;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx(dy.shape);
    nn::relu_backward(dy.ptr(), y_.ptr(), dy.numel(), dx.ptr());
    return dx;
  }

 private:
  Tensor y_;
};

class MaxPool2Layer final : public Layer {
 public:
  explicit MaxPool2Layer(std::string name) : Layer(std::move(name)) {}

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 3) throw ShapeError(name() + ": expected rank-3 input");
    lin_ = x.dim(2);
    const int64_t lout = lin_ / 2;
    if (lout < 1) throw ShapeError(name() + ": input length too short to pool");
    Tensor y({x.dim(0), x.dim(1), lout});
    argmax_.assign(static_cast<size_t>(x.dim(0) * x.dim(1) * lout), 0);
    nn::maxpool2_forward(x.ptr(), x.dim(0) * x.dim(1), lin_, y.ptr(), argmax_.data());
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx({dy.dim(0), dy.dim(1), lin_});
    nn::maxpool2_backward(dy.ptr(), dy.dim(0) * dy.dim(1), dy.dim(2), argmax_.data(),
                          lin_, dx.ptr());
    return dx;
  }

 private:
  int64_t lin_ = 0;
  std::vector<int64_t> argmax_;
};

class AdaptiveMaxPoolLayer final : public Layer {
 public:
  AdaptiveMaxPoolLayer(std::string name, int64_t out_len)
      : Layer(std::move(name)), out_len_(out_len) {}

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 3) throw ShapeError(name() + ": expected rank-3 input");
    if (x.dim(2) < 1) throw ShapeError(name() + ": empty input length");
    lin_ = x.dim(2);
    Tensor y({x.dim(0), x.dim(1), out_len_});
    argmax_.assign(static_cast<size_t>(x.dim(0) * x.dim(1) * out_len_), 0);
    nn::adaptive_maxpool_forward(x.ptr(), x.dim(0) * x.dim(1), lin_, out_len_,
                                 y.ptr(), argmax_.data());
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx({dy.dim(0), dy.dim(1), lin_});
    nn::adaptive_maxpool_backward(dy.ptr(), dy.dim(0) * dy.dim(1), out_len_,
                                  argmax_.data(), lin_, dx.ptr());
    return dx;
  }

 private:
  int64_t out_len_;
  int64_t lin_ = 0;
  std::vector<int64_t> argmax_;
};

class FlattenLayer final : public Layer {
 public:
  explicit FlattenLayer(std::string name) : Layer(std::move(name)) {}

  Tensor forward(const Tensor& x, Mode) override {
    in_shape_ = x.shape;
    Tensor y = x;
    y.shape = {x.dim(0), x.numel() / x.dim(0)};
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx = dy;
    dx.shape = in_shape_;
    return dx;
  }

 private:
  std::vector<int64_t> in_shape_;
};

class DropoutLayer final : public Layer {
 public:
  DropoutLayer(std::string name, double p, uint64_t seed)
      : Layer(std::move(name)), p_(p), rng_(seed) {}

  Tensor forward(const Tensor& x, Mode mode) override {
    last_mode_ = mode;
    if (mode == Mode::Eval || p_ == 0.0) return x;
    mask_.resize(static_cast<size_t>(x.numel()));
    nn::dropout_mask(rng_, p_, x.numel(), mask_.data());
    Tensor y(x.shape);
    nn::apply_mask(x.ptr(), mask_.data(), x.numel(), y.ptr());
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    if (last_mode_ == Mode::Eval || p_ == 0.0) return dy;
    Tensor dx(dy.shape);
    nn::apply_mask(dy.ptr(), mask_.data(), dy.numel(), dx.ptr());
    return dx;
  }

  void reseed(uint64_t seed) override { rng_ = Rng(seed); }

 private:
  double p_;
  Rng rng_;
  std::vector<float> mask_;
  Mode last_mode_ = Mode::Eval;
};

class LinearLayer final : public Layer {
 public:
  LinearLayer(std::string name, int64_t in, int64_t out, Rng& rng)
      : Layer(std::move(name)),
        in_(in),
        out_(out),
        w_({out, in}),
        b_({out}),
        gw_({out, in}),
        gb_({out}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    init_uniform(w_, rng, bound);
    init_uniform(b_, rng, bound);
  }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 2 || x.dim(1) != in_)
      throw ShapeError(name() + ": expected [N," + std::to_string(in_) +
                       "] input, got " + shape_str(x.shape));
    x_ = x;
    Tensor y({x.dim(0), out_});
    nn::linear_forward(x.ptr(), x.dim(0), in_, w_.ptr(), b_.ptr(), out_, false,
                       y.ptr());
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    nn::linear_backward_filter(dy.ptr(), x_.ptr(), x_.dim(0), in_, out_, gw_.ptr(),
                               gb_.ptr());
    Tensor dx(x_.shape);
    nn::linear_backward_data(dy.ptr(), x_.dim(0), out_, w_.ptr(), in_, false,
                             dx.ptr());
    return dx;
  }

  void params(std::vector<ParamRef>& out) override {
    out.push_back({name() + ".w", &w_, &gw_});
    out.push_back({name() + ".b", &b_, &gb_});
  }

 private:
  int64_t in_, out_;
  Tensor w_, b_, gw_, gb_;
  Tensor x_;
};

// Bidirectional stack over the conv feature sequence; emits the final-step
// concatenated hidden state [N, 2H].
class LstmLayer final : public Layer {
 public:
  LstmLayer(std::string name, int64_t input_size, int64_t hidden, int64_t layers,
            double dropout, Rng& rng, uint64_t dropout_seed)
      : Layer(std::move(name)),
        dropout_(dropout),
        weights_(nn::LstmWeights<float>::shaped(input_size, hidden, layers)),
        grads_(nn::LstmWeights<float>::shaped(input_size, hidden, layers)),
        rng_(dropout_seed) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto* group : {&weights_.w_ih, &weights_.w_hh, &weights_.b_ih, &weights_.b_hh})
      for (auto& t : *group) init_uniform(t, rng, bound);
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    if (x.rank() != 3 || x.dim(1) != weights_.input_size)
      throw ShapeError(name() + ": expected [N," +
                       std::to_string(weights_.input_size) + ",T] input, got " +
                       shape_str(x.shape));
    const int64_t n = x.dim(0), f = x.dim(1), steps = x.dim(2);
    std::vector<Tensor> x_seq(static_cast<size_t>(steps), Tensor({n, f}));
    for (int64_t t = 0; t < steps; ++t)
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < f; ++j) x_seq[t](i, j) = x(i, j, t);
    nn::lstm_forward(weights_, x_seq, mode == Mode::Train, dropout_, &rng_, cache_);
    in_shape_ = x.shape;
    return cache_.output_seq.back();
  }

  Tensor backward(const Tensor& dy) override {
    const int64_t steps = cache_.steps;
    std::vector<Tensor> dy_seq(static_cast<size_t>(steps),
                               Tensor({cache_.n, 2 * weights_.hidden}));
    dy_seq.back() = dy;
    std::vector<Tensor> dx_seq;
    nn::lstm_backward(weights_, cache_, dy_seq, grads_, dx_seq);
    Tensor dx(in_shape_);
    for (int64_t t = 0; t < steps; ++t)
      for (int64_t i = 0; i < dx.dim(0); ++i)
        for (int64_t j = 0; j < dx.dim(1); ++j) dx(i, j, t) = dx_seq[t](i, j);
    return dx;
  }

  void params(std::vector<ParamRef>& out) override {
    for (int64_t l = 0; l < weights_.layers; ++l) {
      for (int dir = 0; dir < 2; ++dir) {
        const std::string suffix =
            "_l" + std::to_string(l) + (dir == 0 ? "f" : "r");
        const size_t i = static_cast<size_t>(l * 2 + dir);
        out.push_back({name() + ".w_ih" + suffix, &weights_.w_ih[i], &grads_.w_ih[i]});
        out.push_back({name() + ".w_hh" + suffix, &weights_.w_hh[i], &grads_.w_hh[i]});
        out.push_back({name() + ".b_ih" + suffix, &weights_.b_ih[i], &grads_.b_ih[i]});
        out.push_back({name() + ".b_hh" + suffix, &weights_.b_hh[i], &grads_.b_hh[i]});
      }
    }
  }

  void reseed(uint64_t seed) override { rng_ = Rng(seed); }

 private:
  double dropout_;
  nn::LstmWeights<float> weights_;
  nn::LstmWeights<float> grads_;
  nn::LstmCache<float> cache_;
  Rng rng_;
  std::vector<int64_t> in_shape_;
};

}  // namespace

Model::Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;
Model::~Model() = default;

Tensor Model::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 3 || x.dim(1) != spec_.in_channels)
    throw ShapeError("model expects [N," + std::to_string(spec_.in_channels) +
                     ",L] input, got " + shape_str(x.shape));
  shapes_.clear();
  Tensor cur = x;
  for (auto& layer : layers_) {
    cur = layer->forward(cur, mode);
    shapes_.emplace_back(layer->name(), cur.shape);
  }
  for (const float v : cur.data)
    if (!std::isfinite(v)) throw NonFiniteActivation("non-finite logits");
  return cur;
}

Tensor Model::backward(const Tensor& dlogits) {
  Tensor cur = dlogits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    cur = (*it)->backward(cur);
  return cur;
}

void Model::zero_grad() {
  for (const auto& p : parameters()) p.grad->fill(0.0f);
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> out;
  for (auto& layer : layers_) layer->params(out);
  return out;
}

std::vector<StateRef> Model::state() {
  std::vector<StateRef> out;
  for (auto& layer : layers_) layer->state(out);
  return out;
}

int64_t Model::parameter_count() {
  int64_t total = 0;
  for (const auto& p : parameters()) total += p.value->numel();
  return total;
}

uint64_t Model::parameter_hash() {
  uint64_t h = 0xCBF29CE484222325ULL;
  const auto absorb = [&h](const Tensor& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data.data());
    for (size_t i = 0; i < t.data.size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& p : parameters()) absorb(*p.value);
  for (const auto& s : state()) absorb(*s.value);
  return h;
}

std::vector<Tensor> Model::snapshot_weights() {
  std::vector<Tensor> out;
  for (const auto& p : parameters()) out.push_back(*p.value);
  for (const auto& s : state()) out.push_back(*s.value);
  return out;
}

void Model::restore_weights(const std::vector<Tensor>& weights) {
  size_t i = 0;
  for (const auto& p : parameters()) {
    if (i >= weights.size() || !weights[i].same_shape(*p.value))
      throw ShapeMismatch("weight snapshot does not match model layout");
    *p.value = weights[i++];
  }
  for (const auto& s : state()) {
    if (i >= weights.size() || !weights[i].same_shape(*s.value))
      throw ShapeMismatch("weight snapshot does not match model layout");
    *s.value = weights[i++];
  }
  if (i != weights.size())
    throw ShapeMismatch("weight snapshot has extra tensors");
}

void Model::reseed_dropout(uint64_t seed) {
  uint64_t counter = 0;
  for (auto& layer : layers_) layer->reseed(mix_seed(seed, "dropout", counter++));
}

Model build_model(const ModelSpec& spec, uint64_t seed) {
  if (spec.in_channels < 1) throw InvalidArg("in_channels must be >= 1");
  if (spec.num_classes < 2) throw InvalidArg("num_classes must be >= 2");
  if (spec.lstm_seq_len < 1) throw InvalidArg("lstm_seq_len must be >= 1");
  if (spec.dropout < 0.0 || spec.dropout >= 1.0)
    throw InvalidArg("dropout must be in [0, 1)");

  Rng rng(mix_seed(seed, "init"));
  Model model;
  model.spec_ = spec;
  auto& layers = model.layers_;
  const double p = spec.dropout;

  if (spec.kind == ModelKind::Cnn) {
    layers.push_back(std::make_unique<Conv1dLayer>("conv1", spec.in_channels, 16, 15, 0, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("bn1", 16));
    layers.push_back(std::make_unique<ReluLayer>("relu1"));
    layers.push_back(std::make_unique<Conv1dLayer>("conv2", 16, 32, 3, 0, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("bn2", 32));
    layers.push_back(std::make_unique<ReluLayer>("relu2"));
    layers.push_back(std::make_unique<MaxPool2Layer>("pool2"));
    layers.push_back(std::make_unique<Conv1dLayer>("conv3", 32, 64, 3, 0, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("bn3", 64));
    layers.push_back(std::make_unique<ReluLayer>("relu3"));
    layers.push_back(std::make_unique<Conv1dLayer>("conv4", 64, 128, 3, 0, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("bn4", 128));
    layers.push_back(std::make_unique<ReluLayer>("relu4"));
    layers.push_back(std::make_unique<AdaptiveMaxPoolLayer>("adaptive_pool", 4));
    layers.push_back(std::make_unique<FlattenLayer>("flatten"));
    layers.push_back(std::make_unique<LinearLayer>("fc1", 128 * 4, 256, rng));
    layers.push_back(std::make_unique<ReluLayer>("relu_fc1"));
    layers.push_back(std::make_unique<DropoutLayer>("dropout1", p, 0));
    layers.push_back(std::make_unique<LinearLayer>("fc2", 256, 256, rng));
    layers.push_back(std::make_unique<ReluLayer>("relu_fc2"));
    layers.push_back(std::make_unique<DropoutLayer>("dropout2", p, 0));
    layers.push_back(std::make_unique<LinearLayer>("fc3", 256, spec.num_classes, rng));
  } else {
    layers.push_back(std::make_unique<Conv1dLayer>("conv1", spec.in_channels, 32, 5, 3, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("bn1", 32));
    layers.push_back(std::make_unique<ReluLayer>("relu1"));
    layers.push_back(std::make_unique<Conv1dLayer>("conv2", 32, 64, 3, 2, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("bn2", 64));
    layers.push_back(std::make_unique<ReluLayer>("relu2"));
    layers.push_back(std::make_unique<MaxPool2Layer>("pool2"));
    layers.push_back(std::make_unique<Conv1dLayer>("conv3", 64, 128, 3, 1, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("bn3", 128));
    layers.push_back(std::make_unique<ReluLayer>("relu3"));
    layers.push_back(std::make_unique<Conv1dLayer>("conv4", 128, 256, 3, 1, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("bn4", 256));
    layers.push_back(std::make_unique<ReluLayer>("relu4"));
    layers.push_back(
        std::make_unique<AdaptiveMaxPoolLayer>("adaptive_pool", spec.lstm_seq_len));
    layers.push_back(std::make_unique<LstmLayer>("lstm", 256, 100, 3, p, rng, 0));
    layers.push_back(std::make_unique<LinearLayer>("fc1", 200, 512, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("bn_fc1", 512));
    layers.push_back(std::make_unique<ReluLayer>("relu_fc1"));
    layers.push_back(std::make_unique<DropoutLayer>("dropout1", p, 0));
    layers.push_back(std::make_unique<LinearLayer>("fc2", 512, 256, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("bn_fc2", 256));
    layers.push_back(std::make_unique<ReluLayer>("relu_fc2"));
    layers.push_back(std::make_unique<DropoutLayer>("dropout2", p, 0));
    layers.push_back(std::make_unique<LinearLayer>("fc3", 256, spec.num_classes, rng));
  }

  model.reseed_dropout(mix_seed(seed, "mask_streams"));
  return model;
}

Model build_cnn(int64_t in_channels, int64_t num_classes, uint64_t seed,
                double dropout) {
  ModelSpec spec;
  spec.kind = ModelKind::Cnn;
  spec.in_channels = in_channels;
  spec.num_classes = num_classes;
  spec.dropout = dropout;
  return build_model(spec, seed);
}

Model build_cnn_lstm(int64_t in_channels, int64_t num_classes, uint64_t seed,
                     int64_t lstm_seq_len, double dropout) {
  ModelSpec spec;
  spec.kind = ModelKind::CnnLstm;
  spec.in_channels = in_channels;
  spec.num_classes = num_classes;
  spec.lstm_seq_len = lstm_seq_len;
  spec.dropout = dropout;
  return build_model(spec, seed);
}

Tensor forward(Model& model, const Batch& batch, Mode mode) {
  return model.forward(batch.stacked(), mode);
}

std::vector<double> softmax_probs(std::span<const double> logits) {
  if (logits.empty()) throw NonFiniteInput("empty logit vector");
  double m = logits[0];
  for (const double v : logits) {
    if (!std::isfinite(v)) throw NonFiniteInput("non-finite logit");
    m = std::max(m, v);
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

TensorT<double> predict_proba(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("predict_proba expects [N, K] logits");
  TensorT<double> out(logits.shape);
  const int64_t k = logits.dim(1);
  std::vector<double> row(static_cast<size_t>(k));
  for (int64_t i = 0; i < logits.dim(0); ++i) {
    for (int64_t j = 0; j < k; ++j) row[j] = static_cast<double>(logits(i, j));
    const auto p = softmax_probs(row);
    for (int64_t j = 0; j < k; ++j) out(i, j) = p[j];
  }
  return out;
}

int64_t count_parameters(Model& model) { return model.parameter_count(); }

namespace {
constexpr char kCheckpointMagic[8] = {'S', 'L', 'A', 'G', 'C', 'K', 'P', '1'};
}

void save_checkpoint(Model& model, const std::filesystem::path& path) {
  json header;
  header["format_version"] = 1;
  header["spec"] = {{"kind", model_kind_name(model.spec().kind)},
                    {"in_channels", model.spec().in_channels},
                    {"num_classes", model.spec().num_classes},
                    {"lstm_seq_len", model.spec().lstm_seq_len},
                    {"dropout", model.spec().dropout}};
  json tensors = json::array();
  const auto describe = [&tensors](const std::string& name, const Tensor& t,
                                   const char* kind) {
    tensors.push_back({{"name", name}, {"shape", t.shape}, {"kind", kind}});
  };
  for (const auto& p : model.parameters()) describe(p.name, *p.value, "param");
  for (const auto& s : model.state()) describe(s.name, *s.value, "state");
  header["tensors"] = tensors;
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingFile("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const uint64_t len = header_text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_text.data(), static_cast<std::streamsize>(len));
  const auto dump = [&out](const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  };
  for (const auto& p : model.parameters()) dump(*p.value);
  for (const auto& s : model.state()) dump(*s.value);
  if (!out) throw MissingFile("short write on checkpoint: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw ParseError("bad checkpoint magic in " + path.string());
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_text(len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("truncated checkpoint header in " + path.string());

  json header = json::parse(header_text);
  if (header.at("format_version").get<int>() != 1)
    throw ParseError("unsupported checkpoint version");
  ModelSpec spec;
  spec.kind = model_kind_from_name(header["spec"]["kind"].get<std::string>());
  spec.in_channels = header["spec"]["in_channels"].get<int64_t>();
  spec.num_classes = header["spec"]["num_classes"].get<int64_t>();
  spec.lstm_seq_len = header["spec"]["lstm_seq_len"].get<int64_t>();
  spec.dropout = header["spec"]["dropout"].get<double>();

  Model model = build_model(spec, 0);
  auto params = model.parameters();
  auto state = model.state();
  size_t idx = 0;
  const auto load_into = [&](Tensor& t, const std::string& name) {
    const auto& desc = header["tensors"].at(idx);
    if (desc.at("name").get<std::string>() != name)
      throw ParseError("checkpoint tensor order mismatch at " + name);
    const auto shape = desc.at("shape").get<std::vector<int64_t>>();
    if (shape != t.shape) throw ShapeMismatch("checkpoint shape mismatch at " + name);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    ++idx;
  };
  for (const auto& p : params) load_into(*p.value, p.name);
  for (const auto& s : state) load_into(*s.value, s.name);
  if (!in) throw ParseError("truncated checkpoint data in " + path.string());
  return model;
}

}  // namespace slagflow
