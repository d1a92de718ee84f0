#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slagflow/preprocessing.hpp"
#include "slagflow/tensor.hpp"

namespace slagflow {

struct Provenance {
  int domain_id = 0;
  std::vector<std::string> axes;
  int64_t window_index = 0;
};

// One model-ready (channels x length) sample.
struct LoadedSample {
  Tensor tensor;  // [C, L]
  StageLabel label = StageLabel::EarlyNoSlag;
  Provenance prov;

  int64_t channels() const { return tensor.dim(0); }
  int64_t length() const { return tensor.dim(1); }
};

struct Batch {
  std::vector<LoadedSample> samples;
  std::vector<int> labels;  // contiguous class indices aligned with samples

  // [B, C, L]
  Tensor stacked() const;
};

// per-axis aligned window lists; pair order defines channel order
using WindowGroups = std::vector<std::pair<std::string, std::vector<Window>>>;

std::vector<LoadedSample> load_single_source(const std::vector<Window>& windows,
                                             const std::string& axis);

// Channel c of sample i is axis c's window i.
std::vector<LoadedSample> load_parallel(const WindowGroups& groups);

// Round-robin single-channel interleave: x0, y0, z0, x1, y1, z1, ...
std::vector<LoadedSample> load_selective_embedding(const WindowGroups& groups);

// Deterministic shuffled batching; the final partial batch is retained. The
// class order (for label indices) defaults to the sorted distinct stages in
// `samples`; pass it explicitly when several splits must share one mapping.
std::vector<Batch> make_batches(const std::vector<LoadedSample>& samples,
                                int64_t batch_size,
                                std::optional<uint64_t> shuffle_seed,
                                std::optional<std::vector<StageLabel>> classes = {});

int class_index(const std::vector<StageLabel>& classes, StageLabel label);

}  // namespace slagflow
