#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "slagflow/loading.hpp"
#include "slagflow/tensor.hpp"

namespace slagflow {

enum class ModelKind { Cnn, CnnLstm };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct ModelSpec {
  ModelKind kind = ModelKind::Cnn;
  int64_t in_channels = 1;
  int64_t num_classes = 2;
  int64_t lstm_seq_len = 1;  // adaptive-pool target feeding the recurrence
  double dropout = 0.5;
};

enum class Mode { Train, Eval };

struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

struct StateRef {
  std::string name;
  Tensor* value;
};

class Layer;

class Model {
 public:
  Model();
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();

  // [N, C, L] -> logits [N, K]
  Tensor forward(const Tensor& x, Mode mode);
  // dlogits -> dinput; gradients accumulate into the layers
  Tensor backward(const Tensor& dlogits);
  void zero_grad();

  std::vector<ParamRef> parameters();
  std::vector<StateRef> state();
  int64_t parameter_count();
  uint64_t parameter_hash();

  // params + state, in declaration order
  std::vector<Tensor> snapshot_weights();
  void restore_weights(const std::vector<Tensor>& weights);

  void reseed_dropout(uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  // (layer name, output shape) trace from the last forward
  const std::vector<std::pair<std::string, std::vector<int64_t>>>& layer_output_shapes()
      const {
    return shapes_;
  }

 private:
  friend Model build_model(const ModelSpec& spec, uint64_t seed);
  ModelSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::pair<std::string, std::vector<int64_t>>> shapes_;
};

Model build_model(const ModelSpec& spec, uint64_t seed);
Model build_cnn(int64_t in_channels, int64_t num_classes, uint64_t seed = 0,
                double dropout = 0.5);
Model build_cnn_lstm(int64_t in_channels, int64_t num_classes, uint64_t seed = 0,
                     int64_t lstm_seq_len = 1, double dropout = 0.5);

Tensor forward(Model& model, const Batch& batch, Mode mode);

// Softmax in double precision; throws NonFiniteInput on bad logits.
std::vector<double> softmax_probs(std::span<const double> logits);
TensorT<double> predict_proba(const Tensor& logits);

int64_t count_parameters(Model& model);

// Versioned self-describing checkpoint: spec + flat weight arrays + batch-norm
// running statistics. Round-trips bit-exactly.
void save_checkpoint(Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace slagflow
