#include "slagflow/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "slagflow/rng.hpp"

namespace slagflow {

using nlohmann::json;

char stage_code(StageLabel stage) {
  switch (stage) {
    case StageLabel::EarlyNoSlag: return 'E';
    case StageLabel::BeforeSlag: return 'B';
    case StageLabel::DuringSlag: return 'S';
  }
  return '?';
}

StageLabel stage_from_code(std::string_view code) {
  if (code == "E") return StageLabel::EarlyNoSlag;
  if (code == "B") return StageLabel::BeforeSlag;
  if (code == "S") return StageLabel::DuringSlag;
  throw ParseError("unknown stage code '" + std::string(code) + "'");
}

std::string stage_name(StageLabel stage) {
  switch (stage) {
    case StageLabel::EarlyNoSlag: return "early_no_slag";
    case StageLabel::BeforeSlag: return "before_slag";
    case StageLabel::DuringSlag: return "during_slag";
  }
  return "unknown";
}

const std::vector<double>* SensorRecording::axis(std::string_view name) const {
  for (const auto& [axis_name, samples] : axes)
    if (axis_name == name) return &samples;
  return nullptr;
}

SyntheticSpec SyntheticSpec::defaults() {
  SyntheticSpec spec;
  spec.tone_table = {
      {StageLabel::EarlyNoSlag, {30.0, 35.0, 40.0}},
      {StageLabel::BeforeSlag, {60.0, 70.0, 80.0}},
      {StageLabel::DuringSlag, {120.0, 140.0, 160.0}},
  };
  return spec;
}

void SyntheticSpec::validate() const {
  if (num_domains < 1) throw InvalidSpec("num_domains must be positive");
  if (samples_per_recording < 1) throw InvalidSpec("samples_per_recording must be positive");
  if (sample_rate_hz <= 0.0) throw InvalidSpec("sample_rate_hz must be positive");
  if (noise_sigma < 0.0) throw InvalidSpec("noise_sigma must be non-negative");
  if (domain_jitter < 0.0) throw InvalidSpec("domain_jitter must be non-negative");
  const double nyquist = sample_rate_hz / 2.0;
  for (const auto& [stage, tones] : tone_table) {
    for (const double f : tones) {
      if (f < 0.0) throw InvalidSpec("tone frequency must be non-negative");
      if (f >= nyquist) {
        std::ostringstream os;
        os << "tone " << f << " Hz violates Nyquist limit " << nyquist << " Hz";
        throw InvalidSpec(os.str());
      }
    }
  }
}

const IndexEntry* DatasetIndex::find(int domain, StageLabel stage) const {
  for (const auto& e : entries)
    if (e.domain_id == domain && e.stage == stage) return &e;
  return nullptr;
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  os << (is_complete ? "complete" : "incomplete") << "; missing=" << missing.size()
     << "; anomalies=" << anomalies.size() << "\n";
  for (const auto& [domain, stage] : missing)
    os << "  missing: domain " << domain << " stage " << stage_code(stage) << "\n";
  for (const auto& a : anomalies)
    os << "  " << a.kind << ": domain " << a.domain_id << " stage "
       << stage_code(a.stage) << " condition " << a.condition << ": " << a.detail
       << "\n";
  return os.str();
}

DatasetIndex load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw MissingFile("cannot open manifest: " + manifest_path.string());

  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw MalformedManifest("manifest is not valid JSON: " + std::string(e.what()));
  }

  if (!doc.is_object() || !doc.contains("version") || !doc.contains("sample_rate_hz") ||
      !doc.contains("entries"))
    throw MalformedManifest("manifest must carry version, sample_rate_hz, entries");
  if (!doc["entries"].is_array() || doc["entries"].empty())
    throw MalformedManifest("manifest has no entries");

  DatasetIndex index;
  index.source = DatasetIndex::Source::Disk;
  try {
    index.sample_rate_hz = doc["sample_rate_hz"].get<double>();
    if (doc.contains("samples_per_recording"))
      index.samples_per_recording = doc["samples_per_recording"].get<int64_t>();
  } catch (const json::exception& e) {
    throw MalformedManifest(std::string("bad manifest field: ") + e.what());
  }
  if (index.sample_rate_hz <= 0.0)
    throw MalformedManifest("sample_rate_hz must be positive");

  const auto base = manifest_path.parent_path();
  std::set<std::tuple<int, StageLabel, int>> seen;
  for (const auto& item : doc["entries"]) {
    IndexEntry entry;
    try {
      entry.domain_id = item.at("domain").get<int>();
      entry.stage = stage_from_code(item.at("stage").get<std::string>());
      entry.condition = item.at("condition").get<int>();
      entry.path = (base / item.at("path").get<std::string>()).string();
    } catch (const json::exception& e) {
      throw MalformedManifest(std::string("bad manifest entry: ") + e.what());
    } catch (const ParseError& e) {
      throw MalformedManifest(std::string("bad manifest entry: ") + e.what());
    }
    const auto key = std::make_tuple(entry.domain_id, entry.stage, entry.condition);
    if (!seen.insert(key).second) {
      std::ostringstream os;
      os << "duplicate entry for domain " << entry.domain_id << " stage "
         << stage_code(entry.stage) << " condition " << entry.condition;
      throw DuplicateEntry(os.str());
    }
    if (!std::filesystem::exists(entry.path))
      throw MissingFile("manifest entry points to missing file: " + entry.path);
    index.entries.push_back(std::move(entry));
  }
  return index;
}

namespace {

std::vector<double> parse_csv_recording(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open recording: " + path);

  std::string line;
  if (!std::getline(in, line)) throw EmptyRecording("empty recording file: " + path);
  // strip optional BOM / CR
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y,z")
    throw ParseError("recording header must be 'x,y,z', got '" + line + "' in " + path);

  std::vector<double> values;  // interleaved x,y,z
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t field = 0;
    size_t start = 0;
    while (true) {
      const size_t comma = line.find(',', start);
      const std::string_view token(line.data() + start,
                                   (comma == std::string::npos ? line.size() : comma) - start);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        std::ostringstream os;
        os << "bad numeric field '" << token << "' at " << path << ":" << line_no;
        throw ParseError(os.str());
      }
      values.push_back(v);
      ++field;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (field != 3) {
      std::ostringstream os;
      os << "row with " << field << " fields (expected 3) at " << path << ":" << line_no;
      throw AxisLengthMismatch(os.str());
    }
  }
  if (values.empty()) throw EmptyRecording("recording has no sample rows: " + path);
  return values;
}

}  // namespace

SensorRecording read_recording(const DatasetIndex& index, const IndexEntry& entry) {
  SensorRecording rec;
  rec.domain_id = entry.domain_id;
  rec.stage = entry.stage;
  rec.condition_index = entry.condition;
  rec.sample_rate_hz = index.sample_rate_hz;

  if (index.source == DatasetIndex::Source::Synthetic) {
    for (int a = 0; a < 3; ++a)
      rec.axes.emplace_back(kCanonicalAxes[a],
                            synth_signal(*index.synth, entry.domain_id, entry.stage, a));
    return rec;
  }

  const auto interleaved = parse_csv_recording(entry.path);
  const size_t n = interleaved.size() / 3;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> axis(n);
    for (size_t i = 0; i < n; ++i) axis[i] = interleaved[i * 3 + a];
    rec.axes.emplace_back(kCanonicalAxes[a], std::move(axis));
  }
  return rec;
}

ValidationReport validate_dataset(const DatasetIndex& index) {
  ValidationReport report;

  for (int domain = 1; domain <= kCanonicalDomains; ++domain)
    for (const StageLabel stage : kAllStages)
      if (!index.find(domain, stage)) report.missing.emplace_back(domain, stage);

  // Expected length: declared when the index says so, canonical at the
  // canonical rate, otherwise the modal length across readable entries.
  std::vector<std::pair<const IndexEntry*, int64_t>> lengths;
  for (const auto& entry : index.entries) {
    try {
      const SensorRecording rec = read_recording(index, entry);
      std::set<std::string> names;
      bool ragged = false;
      for (const auto& [name, samples] : rec.axes) {
        names.insert(name);
        if (static_cast<int64_t>(samples.size()) != rec.samples()) ragged = true;
      }
      if (names != std::set<std::string>{"x", "y", "z"})
        report.anomalies.push_back({entry.domain_id, entry.stage, entry.condition,
                                    "axes", "axis names are not x,y,z"});
      if (ragged)
        report.anomalies.push_back({entry.domain_id, entry.stage, entry.condition,
                                    "axes", "axis lengths differ"});
      lengths.emplace_back(&entry, rec.samples());
    } catch (const Error& e) {
      report.anomalies.push_back(
          {entry.domain_id, entry.stage, entry.condition, "read", e.what()});
    }
  }

  int64_t expected = 0;
  if (index.samples_per_recording) {
    expected = *index.samples_per_recording;
  } else if (index.sample_rate_hz == kCanonicalRateHz) {
    expected = kCanonicalSamples;
  } else if (!lengths.empty()) {
    std::map<int64_t, int> counts;
    for (const auto& [entry, len] : lengths) counts[len]++;
    expected = std::max_element(counts.begin(), counts.end(), [](auto& a, auto& b) {
                 return a.second < b.second;
               })->first;
  }

  for (const auto& [entry, len] : lengths) {
    if (expected > 0 && len != expected) {
      std::ostringstream os;
      os << "length " << len << " != expected " << expected;
      report.anomalies.push_back(
          {entry->domain_id, entry->stage, entry->condition, "length", os.str()});
    }
  }

  if (index.sample_rate_hz <= 0.0 || !std::isfinite(index.sample_rate_hz))
    report.anomalies.push_back({0, StageLabel::EarlyNoSlag, 0, "rate",
                                "declared sample rate is not positive"});

  report.is_complete = report.missing.empty() && report.anomalies.empty();
  return report;
}

DatasetIndex generate_synthetic(const SyntheticSpec& raw_spec) {
  SyntheticSpec spec = raw_spec;
  if (spec.tone_table.empty()) spec.tone_table = SyntheticSpec::defaults().tone_table;
  spec.validate();

  DatasetIndex index;
  index.source = DatasetIndex::Source::Synthetic;
  index.sample_rate_hz = spec.sample_rate_hz;
  index.samples_per_recording = spec.samples_per_recording;
  index.synth = spec;
  for (int domain = 1; domain <= spec.num_domains; ++domain)
    for (const StageLabel stage : kAllStages)
      index.entries.push_back({domain, stage, domain, ""});
  return index;
}

std::vector<double> synth_signal(const SyntheticSpec& spec, int domain,
                                 StageLabel stage, int axis_index) {
  const auto it = spec.tone_table.find(stage);
  const double tone = it != spec.tone_table.end() ? it->second[axis_index] : 0.0;

  Rng domain_rng(mix_seed(spec.seed, "domain", static_cast<uint64_t>(domain)));
  const double amp_jitter = domain_rng.uniform(-spec.domain_jitter, spec.domain_jitter);
  const double phase = domain_rng.uniform(-3.14159265358979323846 * spec.domain_jitter,
                                          3.14159265358979323846 * spec.domain_jitter);

  Rng noise_rng(mix_seed(spec.seed, "noise",
                         (static_cast<uint64_t>(domain) << 16) ^
                             (static_cast<uint64_t>(stage) << 8) ^
                             static_cast<uint64_t>(axis_index)));

  const double amp = tone > 0.0 ? spec.amplitude * (1.0 + amp_jitter) : 0.0;
  const double omega = 2.0 * 3.14159265358979323846 * tone / spec.sample_rate_hz;
  std::vector<double> out(static_cast<size_t>(spec.samples_per_recording));
  for (size_t i = 0; i < out.size(); ++i) {
    const double s = amp > 0.0 ? amp * std::sin(omega * static_cast<double>(i) + phase) : 0.0;
    out[i] = s + (spec.noise_sigma > 0.0 ? spec.noise_sigma * noise_rng.gaussian() : 0.0);
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void write_recording_csv(const SensorRecording& recording,
                         const std::filesystem::path& path) {
  if (recording.axes.size() != 3)
    throw InvalidSpec("CSV writer expects exactly axes x,y,z");
  std::ofstream out(path);
  if (!out) throw MissingFile("cannot write recording: " + path.string());
  out << "x,y,z\n";
  const int64_t n = recording.samples();
  for (const auto& [name, samples] : recording.axes)
    if (static_cast<int64_t>(samples.size()) != n)
      throw AxisLengthMismatch("axis lengths differ in recording being written");
  for (int64_t i = 0; i < n; ++i) {
    out << format_double(recording.axes[0].second[i]) << ','
        << format_double(recording.axes[1].second[i]) << ','
        << format_double(recording.axes[2].second[i]) << '\n';
  }
}

std::filesystem::path write_synthetic_dataset(const SyntheticSpec& raw_spec,
                                              const std::filesystem::path& out_dir) {
  DatasetIndex index = generate_synthetic(raw_spec);
  std::filesystem::create_directories(out_dir);

  json entries = json::array();
  for (const auto& entry : index.entries) {
    const SensorRecording rec = read_recording(index, entry);
    std::ostringstream name;
    name << stage_code(entry.stage) << "-" << entry.domain_id << ".csv";
    write_recording_csv(rec, out_dir / name.str());
    entries.push_back({{"domain", entry.domain_id},
                       {"stage", std::string(1, stage_code(entry.stage))},
                       {"condition", entry.condition},
                       {"path", name.str()}});
  }

  json manifest = {
      {"version", 1},
      {"sample_rate_hz", index.sample_rate_hz},
      {"samples_per_recording", *index.samples_per_recording},
      {"entries", entries},
  };
  const auto manifest_path = out_dir / "manifest.json";
  std::ofstream out(manifest_path);
  out << manifest.dump(2) << "\n";
  return manifest_path;
}

SyntheticSpec synthetic_spec_from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open synthetic spec: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw InvalidSpec("synthetic spec is not valid JSON: " + std::string(e.what()));
  }

  SyntheticSpec spec = SyntheticSpec::defaults();
  try {
    if (doc.contains("num_domains")) spec.num_domains = doc["num_domains"].get<int>();
    if (doc.contains("samples_per_recording"))
      spec.samples_per_recording = doc["samples_per_recording"].get<int64_t>();
    if (doc.contains("sample_rate_hz"))
      spec.sample_rate_hz = doc["sample_rate_hz"].get<double>();
    if (doc.contains("amplitude")) spec.amplitude = doc["amplitude"].get<double>();
    if (doc.contains("noise_sigma")) spec.noise_sigma = doc["noise_sigma"].get<double>();
    if (doc.contains("domain_jitter"))
      spec.domain_jitter = doc["domain_jitter"].get<double>();
    if (doc.contains("seed")) spec.seed = doc["seed"].get<uint64_t>();
    if (doc.contains("tone_table")) {
      spec.tone_table.clear();
      for (const auto& [code, tones] : doc["tone_table"].items()) {
        std::array<double, 3> freqs{};
        for (int a = 0; a < 3; ++a) freqs[a] = tones.at(kCanonicalAxes[a]).get<double>();
        spec.tone_table[stage_from_code(code)] = freqs;
      }
    }
  } catch (const json::exception& e) {
    throw InvalidSpec(std::string("bad synthetic spec field: ") + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace slagflow
