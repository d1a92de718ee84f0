#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slagflow/errors.hpp"

namespace slagflow {

enum class StageLabel { EarlyNoSlag = 0, BeforeSlag = 1, DuringSlag = 2 };

inline constexpr std::array<StageLabel, 3> kAllStages = {
    StageLabel::EarlyNoSlag, StageLabel::BeforeSlag, StageLabel::DuringSlag};

char stage_code(StageLabel stage);
StageLabel stage_from_code(std::string_view code);  // throws ParseError
std::string stage_name(StageLabel stage);

inline constexpr std::array<const char*, 3> kCanonicalAxes = {"x", "y", "z"};
inline constexpr double kCanonicalRateHz = 6400.0;
inline constexpr int64_t kCanonicalSamples = 32000;
inline constexpr int kCanonicalDomains = 16;

struct SensorRecording {
  int domain_id = 0;
  StageLabel stage = StageLabel::EarlyNoSlag;
  int condition_index = 0;
  double sample_rate_hz = 0.0;
  // ordered: axis order defines channel order downstream
  std::vector<std::pair<std::string, std::vector<double>>> axes;

  int64_t samples() const {
    return axes.empty() ? 0 : static_cast<int64_t>(axes.front().second.size());
  }
  const std::vector<double>* axis(std::string_view name) const;
};

struct SyntheticSpec {
  int num_domains = kCanonicalDomains;
  int64_t samples_per_recording = kCanonicalSamples;
  double sample_rate_hz = kCanonicalRateHz;
  // tone frequency per (stage, axis index in x/y/z order); 0 = noise only
  std::map<StageLabel, std::array<double, 3>> tone_table;
  double amplitude = 1.0;
  double noise_sigma = 0.05;
  double domain_jitter = 0.1;  // fractional amplitude/phase perturbation
  uint64_t seed = 1;

  static SyntheticSpec defaults();
  void validate() const;  // throws InvalidSpec
};

struct IndexEntry {
  int domain_id = 0;
  StageLabel stage = StageLabel::EarlyNoSlag;
  int condition = 0;
  std::string path;  // empty for synthetic entries
};

struct DatasetIndex {
  enum class Source { Disk, Synthetic };
  Source source = Source::Disk;
  double sample_rate_hz = kCanonicalRateHz;
  std::optional<int64_t> samples_per_recording;  // declared length, if known
  std::vector<IndexEntry> entries;
  std::optional<SyntheticSpec> synth;  // set when source == Synthetic

  const IndexEntry* find(int domain, StageLabel stage) const;
};

struct ValidationReport {
  struct Anomaly {
    int domain_id = 0;
    StageLabel stage = StageLabel::EarlyNoSlag;
    int condition = 0;
    std::string kind;  // "length" | "rate" | "axes" | "read"
    std::string detail;
  };
  bool is_complete = false;
  std::vector<std::pair<int, StageLabel>> missing;
  std::vector<Anomaly> anomalies;

  std::string to_string() const;
};

// Parses and cross-checks a manifest; entry files must exist but their
// contents are not read here.
DatasetIndex load_manifest(const std::filesystem::path& manifest_path);

SensorRecording read_recording(const DatasetIndex& index, const IndexEntry& entry);

ValidationReport validate_dataset(const DatasetIndex& index);

// Builds an in-memory index whose entries synthesize deterministically on
// read; nothing touches disk until write_synthetic_dataset.
DatasetIndex generate_synthetic(const SyntheticSpec& spec);

// One synthesized axis signal for (domain, stage).
std::vector<double> synth_signal(const SyntheticSpec& spec, int domain,
                                 StageLabel stage, int axis_index);

void write_recording_csv(const SensorRecording& recording,
                         const std::filesystem::path& path);

// Materializes a synthetic dataset as CSV files + manifest under out_dir;
// returns the manifest path.
std::filesystem::path write_synthetic_dataset(const SyntheticSpec& spec,
                                              const std::filesystem::path& out_dir);

SyntheticSpec synthetic_spec_from_json_file(const std::filesystem::path& path);

}  // namespace slagflow
