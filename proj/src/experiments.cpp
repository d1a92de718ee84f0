#include "slagflow/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "slagflow/errors.hpp"
#include "slagflow/kernels.hpp"
#include "slagflow/preprocessing.hpp"
#include "slagflow/rng.hpp"

namespace slagflow {

using nlohmann::json;

std::vector<FoldSpec> cross_domain_folds(const std::set<int>& domains) {
  if (domains.size() < 2) throw TooFewDomains("need at least 2 domains to fold");
  std::vector<FoldSpec> folds;
  for (auto it = domains.rbegin(); it != domains.rend(); ++it) {
    FoldSpec fold;
    fold.test_domain = *it;
    fold.train_domains = domains;
    fold.train_domains.erase(*it);
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::string preproc_name(Preproc p) {
  switch (p) {
    case Preproc::None: return "none";
    case Preproc::ZScore: return "zscore";
    case Preproc::Rms: return "rms";
  }
  return "?";
}

Preproc preproc_from_name(const std::string& name) {
  if (name == "none") return Preproc::None;
  if (name == "zscore") return Preproc::ZScore;
  if (name == "rms") return Preproc::Rms;
  throw ParseError("unknown preprocessing '" + name + "'");
}

std::string loading_name(Loading l) {
  switch (l) {
    case Loading::SingleSource: return "single_source";
    case Loading::Parallel: return "parallel";
    case Loading::SelectiveEmbedding: return "selective_embedding";
  }
  return "?";
}

Loading loading_from_name(const std::string& name) {
  if (name == "single_source") return Loading::SingleSource;
  if (name == "parallel") return Loading::Parallel;
  if (name == "selective_embedding") return Loading::SelectiveEmbedding;
  throw ParseError("unknown loading strategy '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (id.empty()) throw InvalidArg("config id must not be empty");
  if (axes.empty()) throw InvalidArg("config needs at least one axis");
  if (std::set<std::string>(axes.begin(), axes.end()).size() != axes.size())
    throw InvalidArg("config axes must be distinct");
  if (loading == Loading::SingleSource && axes.size() != 1)
    throw InvalidArg("single-source loading requires exactly one axis");
  if (loading != Loading::SingleSource && axes.size() < 2)
    throw InvalidArg(loading_name(loading) + " loading requires at least two axes");
  if (classes.size() < 2) throw InvalidArg("config needs at least two classes");
  for (size_t i = 1; i < classes.size(); ++i)
    if (!(classes[i - 1] < classes[i]))
      throw InvalidArg("config classes must be distinct and in stage order");
  if (window_length < 1) throw InvalidArg("window_length must be >= 1");
  if (batch_size < 1) throw InvalidArg("batch_size must be >= 1");
  if (repeats < 1) throw InvalidArg("repeats must be >= 1");
  if (folds.empty()) throw InvalidArg("config needs at least one fold");
  for (const auto& fold : folds) {
    if (fold.train_domains.empty()) throw InvalidArg("fold with no training domains");
    if (fold.train_domains.count(fold.test_domain))
      throw InvalidArg("fold test domain appears in its training set");
  }
  settings.validate();
}

namespace {

json config_to_json(const ExperimentConfig& c) {
  std::set<int> domains;
  json test_domains = json::array();
  for (const auto& fold : c.folds) {
    domains.insert(fold.test_domain);
    domains.insert(fold.train_domains.begin(), fold.train_domains.end());
    test_domains.push_back(fold.test_domain);
  }
  json axes = json::array();
  for (const auto& a : c.axes) axes.push_back(a);
  json classes = json::array();
  for (const StageLabel s : c.classes) classes.push_back(std::string(1, stage_code(s)));
  return json{{"id", c.id},
              {"model", model_kind_name(c.model_kind)},
              {"preprocessing", preproc_name(c.preprocessing)},
              {"loading", loading_name(c.loading)},
              {"axes", axes},
              {"classes", classes},
              {"window_length", c.window_length},
              {"batch_size", c.batch_size},
              {"domains", domains},
              {"test_domains", test_domains},
              {"repeats", c.repeats},
              {"settings",
               {{"learning_rate", c.settings.learning_rate},
                {"epochs", c.settings.epochs},
                {"seed", c.settings.seed},
                {"val_fraction", c.settings.val_fraction}}}};
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  c.id = doc.at("id").get<std::string>();
  c.model_kind = model_kind_from_name(doc.at("model").get<std::string>());
  c.preprocessing = preproc_from_name(doc.at("preprocessing").get<std::string>());
  c.loading = loading_from_name(doc.at("loading").get<std::string>());
  c.axes = doc.at("axes").get<std::vector<std::string>>();
  c.classes.clear();
  for (const auto& code : doc.at("classes"))
    c.classes.push_back(stage_from_code(code.get<std::string>()));
  std::sort(c.classes.begin(), c.classes.end());
  c.window_length = doc.at("window_length").get<int>();
  c.batch_size = doc.at("batch_size").get<int>();
  std::set<int> domains;
  if (doc.contains("domains")) {
    for (const auto& d : doc["domains"]) domains.insert(d.get<int>());
  } else {
    for (int d = 1; d <= kCanonicalDomains; ++d) domains.insert(d);
  }
  c.folds.clear();
  for (const auto& td : doc.at("test_domains")) {
    FoldSpec fold;
    fold.test_domain = td.get<int>();
    fold.train_domains = domains;
    fold.train_domains.erase(fold.test_domain);
    c.folds.push_back(std::move(fold));
  }
  if (doc.contains("repeats")) c.repeats = doc["repeats"].get<int>();
  if (doc.contains("settings")) {
    const auto& s = doc["settings"];
    if (s.contains("learning_rate"))
      c.settings.learning_rate = s["learning_rate"].get<double>();
    if (s.contains("epochs")) c.settings.epochs = s["epochs"].get<int>();
    if (s.contains("seed")) c.settings.seed = s["seed"].get<uint64_t>();
    if (s.contains("val_fraction"))
      c.settings.val_fraction = s["val_fraction"].get<double>();
  }
  c.settings.batch_size = c.batch_size;
  return c;
}

json aggregate_to_json(const AggregateResult& a) {
  return json{{"test_domain", a.test_domain}, {"accs", a.accs},
              {"mean", a.mean},               {"std", a.stdev},
              {"std_undefined", a.std_undefined}, {"confusions", a.confusions}};
}

AggregateResult aggregate_from_json(const std::string& config_id, const json& doc) {
  AggregateResult a;
  a.config_id = config_id;
  a.test_domain = doc.at("test_domain").get<int>();
  a.accs = doc.at("accs").get<std::vector<double>>();
  a.mean = doc.at("mean").get<double>();
  a.stdev = doc.at("std").get<double>();
  a.std_undefined = doc.at("std_undefined").get<bool>();
  a.confusions =
      doc.at("confusions").get<std::vector<std::vector<std::vector<int64_t>>>>();
  return a;
}

}  // namespace

std::string ExperimentConfig::to_json_string() const {
  return config_to_json(*this).dump(2);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError("config is not valid JSON: " + std::string(e.what()));
  }
  try {
    return config_from_json(doc);
  } catch (const json::exception& e) {
    throw ParseError("bad config field: " + std::string(e.what()));
  }
}

std::string ExperimentSummary::to_json_string() const {
  json folds = json::array();
  for (const auto& a : per_fold) folds.push_back(aggregate_to_json(a));
  json doc = {{"schema", "slagflow-aggregate-v1"},
              {"config", config_to_json(config)},
              {"per_fold", folds},
              {"overall",
               {{"points", all_points},
                {"mean", mean},
                {"std", stdev},
                {"std_undefined", std_undefined}}}};
  return doc.dump(2);
}

ExperimentSummary ExperimentSummary::from_json_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError("aggregate is not valid JSON: " + std::string(e.what()));
  }
  try {
    ExperimentSummary s;
    s.config = config_from_json(doc.at("config"));
    for (const auto& f : doc.at("per_fold"))
      s.per_fold.push_back(aggregate_from_json(s.config.id, f));
    const auto& overall = doc.at("overall");
    s.all_points = overall.at("points").get<std::vector<double>>();
    s.mean = overall.at("mean").get<double>();
    s.stdev = overall.at("std").get<double>();
    s.std_undefined = overall.at("std_undefined").get<bool>();
    return s;
  } catch (const json::exception& e) {
    throw ParseError("bad aggregate field: " + std::string(e.what()));
  }
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) throw EmptyInput("mean of empty list");
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean_of(values);
  double acc = 0.0;
  for (const double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

MaterializedFold materialize_fold(const DatasetIndex& index,
                                  const ExperimentConfig& config,
                                  const FoldSpec& fold) {
  config.validate();

  std::set<int> wanted = fold.train_domains;
  wanted.insert(fold.test_domain);

  struct Loaded {
    SensorRecording rec;
    bool is_test;
  };
  std::vector<Loaded> recordings;
  for (const int domain : wanted) {
    for (const StageLabel stage : config.classes) {
      bool found = false;
      for (const auto& entry : index.entries) {
        if (entry.domain_id != domain || entry.stage != stage) continue;
        recordings.push_back({read_recording(index, entry), domain == fold.test_domain});
        found = true;
      }
      if (!found) {
        std::ostringstream os;
        os << "dataset has no recording for domain " << domain << " stage "
           << stage_code(stage);
        throw MissingFile(os.str());
      }
    }
  }

  for (const auto& loaded : recordings)
    for (const auto& axis : config.axes)
      if (!loaded.rec.axis(axis))
        throw UnknownAxis("recording lacks axis '" + axis + "'");

  std::optional<Normalizer> rms;
  if (config.preprocessing == Preproc::Rms) {
    std::vector<std::pair<std::string, std::vector<std::span<const double>>>> train;
    for (const auto& axis : config.axes) {
      std::vector<std::span<const double>> signals;
      for (const auto& loaded : recordings)
        if (!loaded.is_test) signals.emplace_back(*loaded.rec.axis(axis));
      train.emplace_back(axis, std::move(signals));
    }
    rms = Normalizer::fit_rms(train);
  }

  const auto transform = [&](const SensorRecording& rec,
                             const std::string& axis) -> std::vector<double> {
    const auto& raw = *rec.axis(axis);
    switch (config.preprocessing) {
      case Preproc::None: return raw;
      case Preproc::ZScore: return standardize(raw);
      case Preproc::Rms: return rms->apply(raw, axis);
    }
    return raw;
  };

  MaterializedFold out;
  out.normalizer = rms;
  for (const auto& loaded : recordings) {
    WindowGroups groups;
    for (const auto& axis : config.axes) {
      const auto signal = transform(loaded.rec, axis);
      groups.emplace_back(axis, window_signal(signal, config.window_length,
                                              loaded.rec.stage, loaded.rec.domain_id,
                                              axis));
    }
    std::vector<LoadedSample> samples;
    switch (config.loading) {
      case Loading::SingleSource:
        samples = load_single_source(groups.front().second, groups.front().first);
        break;
      case Loading::Parallel:
        samples = load_parallel(groups);
        break;
      case Loading::SelectiveEmbedding:
        samples = load_selective_embedding(groups);
        break;
    }
    auto& sink = loaded.is_test ? out.test : out.train_val;
    sink.insert(sink.end(), std::make_move_iterator(samples.begin()),
                std::make_move_iterator(samples.end()));
  }
  return out;
}

namespace {

ModelSpec model_spec_for(const ExperimentConfig& config) {
  ModelSpec spec;
  spec.kind = config.model_kind;
  spec.in_channels = config.loading == Loading::Parallel
                         ? static_cast<int64_t>(config.axes.size())
                         : 1;
  spec.num_classes = static_cast<int64_t>(config.classes.size());
  return spec;
}

struct RepeatOutcome {
  double acc = 0.0;
  std::vector<std::vector<int64_t>> confusion;
};

// nullopt when the record is absent, unreadable, or from a different seed
std::optional<RepeatOutcome> load_completed(const std::filesystem::path& record_path,
                                            uint64_t expected_seed) {
  std::ifstream in(record_path);
  if (!in) return std::nullopt;
  try {
    json doc;
    in >> doc;
    if (doc.at("seed").get<uint64_t>() != expected_seed) return std::nullopt;
    RepeatOutcome outcome;
    outcome.acc = doc.at("test_acc_at_best").get<double>();
    outcome.confusion =
        doc.at("confusion_at_best").get<std::vector<std::vector<int64_t>>>();
    return outcome;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& config,
                                 const DatasetIndex& index,
                                 const RunOptions& options) {
  config.validate();

  ExperimentSummary summary;
  summary.config = config;

  std::filesystem::path config_dir;
  if (options.output_dir) {
    config_dir = *options.output_dir / config.id;
    std::filesystem::create_directories(config_dir);
    std::ofstream out(config_dir / "config.json");
    out << config.to_json_string() << "\n";
  }

  for (const auto& fold : config.folds) {
    AggregateResult agg;
    agg.config_id = config.id;
    agg.test_domain = fold.test_domain;
    agg.accs.assign(static_cast<size_t>(config.repeats), 0.0);
    agg.confusions.assign(static_cast<size_t>(config.repeats), {});

    std::vector<std::optional<RepeatOutcome>> done(
        static_cast<size_t>(config.repeats));
    std::vector<int> pending;
    for (int r = 0; r < config.repeats; ++r) {
      const uint64_t seed = config.settings.seed + static_cast<uint64_t>(r);
      if (options.resume && options.output_dir) {
        const auto record = config_dir / std::to_string(fold.test_domain) /
                            (std::to_string(r) + ".json");
        done[r] = load_completed(record, seed);
      }
      if (!done[r]) pending.push_back(r);
    }

    std::optional<MaterializedFold> data;
    if (!pending.empty()) {
      data = materialize_fold(index, config, fold);
      if (options.output_dir && data->normalizer) {
        const auto fold_dir = config_dir / std::to_string(fold.test_domain);
        std::filesystem::create_directories(fold_dir);
        std::ofstream out(fold_dir / "normalizer.json");
        out << data->normalizer->to_json_string() << "\n";
      }
    }

    const auto run_repeat = [&](int r) {
      TrainSettings settings = config.settings;
      settings.seed = config.settings.seed + static_cast<uint64_t>(r);
      settings.batch_size = config.batch_size;
      const auto [train, val] = split_train_val(
          data->train_val, settings.val_fraction, mix_seed(settings.seed, "val_split"));
      std::optional<std::filesystem::path> prefix;
      if (options.output_dir)
        prefix = config_dir / std::to_string(fold.test_domain) / std::to_string(r);
      const RunResult result = train_one_run(model_spec_for(config), train, val,
                                             data->test, settings, config.classes,
                                             prefix);
      done[r] = RepeatOutcome{result.test_acc_at_best, result.confusion_at_best};
      if (options.verbose)
        std::fprintf(stderr, "[%s] fold %d repeat %d: test acc %.4f (best epoch %d)\n",
                     config.id.c_str(), fold.test_domain, r, result.test_acc_at_best,
                     result.best_epoch);
    };

    if (options.workers > 1 && pending.size() > 1) {
      // jobs own their training; kernel-level threading is turned off so the
      // machine is not oversubscribed
      const nn::Exec previous = nn::default_exec();
      nn::set_default_exec(nn::Exec::Serial);
      std::atomic<size_t> next{0};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      const size_t worker_count =
          std::min<size_t>(static_cast<size_t>(options.workers), pending.size());
      std::vector<std::thread> workers;
      for (size_t w = 0; w < worker_count; ++w) {
        workers.emplace_back([&] {
          for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= pending.size()) return;
            try {
              run_repeat(pending[i]);
            } catch (...) {
              std::lock_guard<std::mutex> lock(failure_mutex);
              if (!failure) failure = std::current_exception();
              return;
            }
          }
        });
      }
      for (auto& t : workers) t.join();
      nn::set_default_exec(previous);
      if (failure) std::rethrow_exception(failure);
    } else {
      for (const int r : pending) run_repeat(r);
    }

    for (int r = 0; r < config.repeats; ++r) {
      agg.accs[r] = done[r]->acc;
      agg.confusions[r] = done[r]->confusion;
    }
    agg.mean = mean_of(agg.accs);
    agg.std_undefined = agg.accs.size() < 2;
    agg.stdev = sample_std(agg.accs);
    summary.per_fold.push_back(std::move(agg));
  }

  for (const auto& fold_result : summary.per_fold)
    summary.all_points.insert(summary.all_points.end(), fold_result.accs.begin(),
                              fold_result.accs.end());
  summary.mean = mean_of(summary.all_points);
  summary.std_undefined = summary.all_points.size() < 2;
  summary.stdev = sample_std(summary.all_points);

  if (options.output_dir) {
    std::ofstream out(config_dir / "aggregate.json");
    out << summary.to_json_string() << "\n";
  }
  return summary;
}

std::vector<ExperimentConfig> hyperparameter_grid() {
  std::set<int> domains;
  for (int d = 1; d <= kCanonicalDomains; ++d) domains.insert(d);
  FoldSpec fold;
  fold.test_domain = 16;
  fold.train_domains = domains;
  fold.train_domains.erase(16);

  std::vector<ExperimentConfig> out;
  for (const ModelKind model : {ModelKind::Cnn, ModelKind::CnnLstm}) {
    for (const Preproc prep : {Preproc::ZScore, Preproc::Rms}) {
      for (const int batch : {64, 128}) {
        for (const int window : {512, 1024, 2048}) {
          ExperimentConfig c;
          std::ostringstream id;
          id << "G-" << model_kind_name(model) << "-" << preproc_name(prep) << "-b"
             << batch << "-w" << window;
          c.id = id.str();
          c.model_kind = model;
          c.preprocessing = prep;
          c.loading = Loading::SingleSource;
          c.axes = {"y"};
          c.classes = {StageLabel::BeforeSlag, StageLabel::DuringSlag};
          c.window_length = window;
          c.batch_size = batch;
          c.settings.batch_size = batch;
          c.folds = {fold};
          c.repeats = 10;
          out.push_back(std::move(c));
        }
      }
    }
  }
  return out;
}

const std::array<AblationRow, 10>& ablation_matrix() {
  static const std::array<AblationRow, 10> rows = {{
      {"A1", true, false, true, true, false, false, 2, "single_source",
       "CNN only, RMS, x-axis, two stages"},
      {"A2", true, false, true, false, true, false, 2, "single_source",
       "CNN only, RMS, y-axis, two stages"},
      {"A3", true, false, true, false, false, true, 2, "single_source",
       "CNN only, RMS, z-axis, two stages"},
      {"A4", true, true, true, true, false, false, 2, "single_source",
       "CNN-LSTM, RMS, x-axis, two stages"},
      {"A5", true, true, true, false, true, false, 2, "single_source",
       "CNN-LSTM, RMS, y-axis, two stages"},
      {"A6", true, true, true, false, false, true, 2, "single_source",
       "CNN-LSTM, RMS, z-axis, two stages"},
      {"A7", true, true, false, false, true, false, 3, "single_source",
       "CNN-LSTM, no preprocessing, y-axis, three stages"},
      {"A8", true, true, true, false, true, false, 3, "single_source",
       "CNN-LSTM, RMS, y-axis, three stages"},
      {"M9", true, true, true, true, true, true, 2, "selective_embedding",
       "CNN-LSTM, RMS, all axes, single-channel selective embedding"},
      {"M10", true, true, true, true, true, true, 2, "parallel",
       "CNN-LSTM, RMS, all axes, multi-channel parallel loading"},
  }};
  return rows;
}

std::vector<ExperimentConfig> ablation_suite() {
  std::set<int> domains;
  for (int d = 1; d <= kCanonicalDomains; ++d) domains.insert(d);
  const auto folds = cross_domain_folds(domains);

  std::vector<ExperimentConfig> out;
  for (const AblationRow& row : ablation_matrix()) {
    ExperimentConfig c;
    c.id = row.id;
    c.model_kind = row.lstm ? ModelKind::CnnLstm : ModelKind::Cnn;
    c.preprocessing = row.rms ? Preproc::Rms : Preproc::None;
    c.loading = loading_from_name(row.loading);
    c.axes.clear();
    if (row.axis_x) c.axes.push_back("x");
    if (row.axis_y) c.axes.push_back("y");
    if (row.axis_z) c.axes.push_back("z");
    c.classes = row.num_classes == 3
                    ? std::vector<StageLabel>{StageLabel::EarlyNoSlag,
                                              StageLabel::BeforeSlag,
                                              StageLabel::DuringSlag}
                    : std::vector<StageLabel>{StageLabel::BeforeSlag,
                                              StageLabel::DuringSlag};
    c.window_length = 512;
    c.batch_size = 64;
    c.settings.batch_size = 64;
    c.folds = folds;
    c.repeats = 10;
    out.push_back(std::move(c));
  }
  return out;
}

void apply_paper_faithful(ExperimentConfig& config) {
  config.repeats = 10;
  config.settings.epochs = 100;
  config.settings.learning_rate = 0.001;
}

}  // namespace slagflow
