#include "slagflow/preprocessing.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

namespace slagflow {

using nlohmann::json;

std::vector<double> standardize(std::span<const double> signal) {
  if (signal.size() < 2) throw TooShort("standardize needs at least 2 samples");

  double mean = 0.0;
  for (const double v : signal) mean += v;
  mean /= static_cast<double>(signal.size());

  double var = 0.0;
  for (const double v : signal) {
    const double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(signal.size());
  if (var == 0.0) throw DegenerateSignal("signal has zero variance");

  const double inv_std = 1.0 / std::sqrt(var);
  std::vector<double> out(signal.size());
  for (size_t i = 0; i < signal.size(); ++i) out[i] = (signal[i] - mean) * inv_std;
  return out;
}

Normalizer Normalizer::zscore() {
  Normalizer n;
  n.kind_ = NormKind::ZScore;
  return n;
}

Normalizer Normalizer::fit_rms(
    const std::vector<std::pair<std::string, std::vector<std::span<const double>>>>&
        train_signals_by_axis) {
  Normalizer n;
  n.kind_ = NormKind::Rms;
  for (const auto& [axis, signals] : train_signals_by_axis) {
    double sum_sq = 0.0;
    int64_t count = 0;
    for (const auto& sig : signals) {
      for (const double v : sig) sum_sq += v * v;
      count += static_cast<int64_t>(sig.size());
    }
    if (count == 0) throw ZeroSignal("axis '" + axis + "' has no training samples");
    const double rms = std::sqrt(sum_sq / static_cast<double>(count));
    if (rms == 0.0) throw ZeroSignal("axis '" + axis + "' is identically zero");
    n.rms_[axis] = rms;
  }
  if (n.rms_.empty()) throw ZeroSignal("no axes to fit");
  n.fitted_ = true;
  return n;
}

std::vector<double> Normalizer::apply(std::span<const double> signal,
                                      const std::string& axis) const {
  if (kind_ == NormKind::ZScore) return standardize(signal);
  if (!fitted_) throw NotFitted("RMS normalizer used before fitting");
  const auto it = rms_.find(axis);
  if (it == rms_.end()) throw UnknownAxis("no RMS fitted for axis '" + axis + "'");
  const double inv = 1.0 / it->second;
  std::vector<double> out(signal.size());
  for (size_t i = 0; i < signal.size(); ++i) out[i] = signal[i] * inv;
  return out;
}

double Normalizer::rms_value(const std::string& axis) const {
  if (kind_ != NormKind::Rms || !fitted_)
    throw NotFitted("rms_value requires a fitted RMS normalizer");
  const auto it = rms_.find(axis);
  if (it == rms_.end()) throw UnknownAxis("no RMS fitted for axis '" + axis + "'");
  return it->second;
}

std::string Normalizer::to_json_string() const {
  json doc;
  doc["kind"] = kind_ == NormKind::ZScore ? "zscore" : "rms";
  if (kind_ == NormKind::Rms) {
    json values;
    for (const auto& [axis, rms] : rms_) values[axis] = rms;
    doc["rms_value"] = values;
  }
  return doc.dump();
}

Normalizer Normalizer::from_json_string(const std::string& text) {
  json doc = json::parse(text);
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "zscore") return zscore();
  if (kind != "rms") throw ParseError("unknown normalizer kind '" + kind + "'");
  Normalizer n;
  n.kind_ = NormKind::Rms;
  for (const auto& [axis, rms] : doc.at("rms_value").items())
    n.rms_[axis] = rms.get<double>();
  if (n.rms_.empty()) throw ParseError("rms normalizer without axes");
  n.fitted_ = true;
  return n;
}

std::vector<Window> window_signal(std::span<const double> signal, int64_t length,
                                  StageLabel label, int domain_id, std::string axis) {
  if (length < 1) throw InvalidArg("window length must be >= 1");
  const int64_t count = static_cast<int64_t>(signal.size()) / length;
  if (count == 0) {
    std::ostringstream os;
    os << "signal of " << signal.size() << " samples is shorter than window " << length;
    throw EmptyResult(os.str());
  }
  std::vector<Window> out;
  out.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    Window w;
    w.samples.assign(signal.begin() + i * length, signal.begin() + (i + 1) * length);
    w.label = label;
    w.domain_id = domain_id;
    w.axis = axis;
    w.window_index = i;
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace slagflow
