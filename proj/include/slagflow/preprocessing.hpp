#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "slagflow/dataset.hpp"
#include "slagflow/errors.hpp"

namespace slagflow {

enum class NormKind { ZScore, Rms };

// Rescales a signal to zero mean and unit population standard deviation.
std::vector<double> standardize(std::span<const double> signal);

// Z-score is stateless per signal; the RMS variant carries one scale per axis
// fitted from training data only.
class Normalizer {
 public:
  static Normalizer zscore();
  static Normalizer fit_rms(
      const std::vector<std::pair<std::string, std::vector<std::span<const double>>>>&
          train_signals_by_axis);

  NormKind kind() const { return kind_; }
  bool fitted() const { return kind_ == NormKind::ZScore || fitted_; }

  std::vector<double> apply(std::span<const double> signal, const std::string& axis) const;
  double rms_value(const std::string& axis) const;

  std::string to_json_string() const;
  static Normalizer from_json_string(const std::string& text);

 private:
  Normalizer() = default;
  NormKind kind_ = NormKind::ZScore;
  bool fitted_ = false;
  std::map<std::string, double> rms_;
};

struct Window {
  std::vector<double> samples;
  StageLabel label = StageLabel::EarlyNoSlag;
  int domain_id = 0;
  std::string axis;
  int64_t window_index = 0;
};

// Consecutive non-overlapping windows; the trailing remainder is dropped.
std::vector<Window> window_signal(std::span<const double> signal, int64_t length,
                                  StageLabel label, int domain_id, std::string axis);

}  // namespace slagflow
