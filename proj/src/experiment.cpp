#include "earlycast/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "earlycast/bundle.hpp"
#include "earlycast/error.hpp"
#include "earlycast/evaluate.hpp"
#include "json.hpp"

namespace earlycast {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view preset_name(Preset preset) { return preset == Preset::kDesk ? "desk" : "full"; }

std::optional<Preset> parse_preset(std::string_view name) {
  if (name == "full") return Preset::kFull;
  if (name == "desk") return Preset::kDesk;
  return std::nullopt;
}

const std::vector<std::string>& all_models() {
  static const std::vector<std::string> models{"MTO", "MTM", "HYB", "PSC", "TCN10", "TCN30", "TCN60"};
  return models;
}

bool is_known_model(std::string_view name) {
  const auto& m = all_models();
  return std::find(m.begin(), m.end(), name) != m.end();
}

namespace {

const std::set<std::string>& epoch_keys() {
  static const std::set<std::string> keys{"MTO", "MTM", "HYB", "PREDICTOR", "TCN10", "TCN30", "TCN60"};
  return keys;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void say(const ExperimentConfig& c, const std::string& line) {
  if (c.log) c.log(line);
}

void write_file(const fs::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out << text;
    if (!out) throw DataError("error while writing " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move " + tmp + " into place: " + ec.message());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<std::string> ordered_roster(const ExperimentConfig& c) {
  std::vector<std::string> out;
  for (const auto& m : all_models())
    if (std::find(c.models.begin(), c.models.end(), m) != c.models.end()) out.push_back(m);
  return out;
}

std::string loss_csv(const LossHistory& h) {
  std::string s = "epoch,train_loss,validation_loss\n";
  for (std::size_t e = 0; e < h.train.size(); ++e)
    s += std::to_string(e + 1) + "," + fmt(h.train[e]) + "," + fmt(h.validation[e]) + "\n";
  return s;
}

EpochCallback progress(const ExperimentConfig& c, std::size_t rep, const std::string& name, std::size_t epochs) {
  if (!c.log) return {};
  const std::size_t every = std::max<std::size_t>(1, epochs / 5);
  return [&c, rep, name, epochs, every](std::size_t epoch, double train, double val) {
    if (epoch % every != 0 && epoch != epochs) return;
    char buf[160];
    std::snprintf(buf, sizeof buf, "rep %zu %s epoch %zu/%zu train %.4f val %.4f", rep, name.c_str(), epoch, epochs,
                  train, val);
    c.log(buf);
  };
}

}  // namespace

ExperimentConfig ExperimentConfig::for_preset(Preset preset) {
  ExperimentConfig c;
  c.preset = preset;
  if (preset == Preset::kDesk) {
    c.repetitions = 3;
    c.synth.trial_count = 400;
    for (const char* m : {"MTO", "MTM", "HYB", "PREDICTOR"}) c.epochs[m] = 50;
    for (const char* m : {"TCN10", "TCN30", "TCN60"}) c.epochs[m] = 100;
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (repetitions == 0) throw Error("repetitions must be at least 1");
  if (models.empty()) throw Error("the model roster is empty");
  std::set<std::string> seen;
  for (const auto& m : models) {
    if (!is_known_model(m)) throw Error("unknown model " + m + " (known: MTO, MTM, HYB, PSC, TCN10, TCN30, TCN60)");
    if (!seen.insert(m).second) throw Error("model " + m + " listed twice");
  }
  for (const auto& [k, v] : epochs) {
    if (!epoch_keys().count(k)) throw Error("epoch override for unknown model " + k);
    if (v == 0) throw Error("epochs for " + k + " must be positive");
  }
  if (workers == 0) throw Error("workers must be at least 1");
  if (warmup == 0 || warmup > kSequenceLength) throw Error("warm-up must lie in 1.." + std::to_string(kSequenceLength));
  thresholds.validate();
  synth.validate();
}

fs::path ExperimentConfig::dataset_dir() const { return dataset.empty() ? out / "dataset" : dataset; }

fs::path ExperimentConfig::repetition_dir(std::size_t rep) const { return out / ("rep" + std::to_string(rep)); }

std::uint64_t ExperimentConfig::repetition_seed(std::size_t rep) const {
  return mix_seed(mix_seed(seed, stable_hash("repetition")), rep);
}

std::uint64_t ExperimentConfig::model_seed(std::uint64_t repetition_seed, std::string_view model) {
  return mix_seed(repetition_seed, stable_hash(model));
}

LstmModelConfig ExperimentConfig::lstm_config(LstmVariant variant) const {
  LstmModelConfig c = LstmModelConfig::for_variant(variant);
  if (auto it = epochs.find(std::string(variant_name(variant))); it != epochs.end()) c.epochs = it->second;
  return c;
}

TcnConfig ExperimentConfig::tcn_config(std::string_view name) const {
  auto c = TcnConfig::preset(name);
  if (!c) throw Error("unknown TCN " + std::string(name));
  if (auto it = epochs.find(std::string(name)); it != epochs.end()) c->epochs = it->second;
  return *c;
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream s;
  s << "seed=" << seed << "\npreset=" << preset_name(preset) << "\nrepetitions=" << repetitions << "\nmodels=";
  const auto roster = ordered_roster(*this);
  for (std::size_t i = 0; i < roster.size(); ++i) s << (i ? "," : "") << roster[i];
  s << "\ndataset=" << dataset.string() << "\nwarmup=" << warmup << "\nthreshold_hi=" << fmt(thresholds.hi)
    << "\nthreshold_lo=" << fmt(thresholds.lo) << "\nthreshold_round=" << fmt(thresholds.round) << "\n";
  for (const char* m : {"MTO", "MTM", "HYB", "PREDICTOR"}) {
    s << "epochs." << m << "=" << lstm_config(*parse_lstm_variant(m)).epochs << "\n";
  }
  for (const char* m : {"TCN10", "TCN30", "TCN60"}) s << "epochs." << m << "=" << tcn_config(m).epochs << "\n";
  SynthConfig sc = synth;
  sc.seed = seed;
  s << sc.canonical();
  return s.str();
}

const TrainedModel* TrainingRecord::find(const std::string& model) const {
  for (const auto& m : models)
    if (m.model == model) return &m;
  return nullptr;
}

bool TrainingRecord::any_failed() const {
  return std::any_of(models.begin(), models.end(), [](const TrainedModel& m) { return !m.ok; });
}

void write_training_record(const fs::path& path, const TrainingRecord& r) {
  json models = json::array();
  for (const auto& m : r.models) {
    models.push_back({{"model", m.model},
                      {"ok", m.ok},
                      {"error", m.error},
                      {"bundles", m.bundles},
                      {"epochs_run", m.epochs_run},
                      {"final_train_loss", m.ok ? json(m.final_train_loss) : json(nullptr)},
                      {"final_validation_loss", m.ok ? json(m.final_validation_loss) : json(nullptr)},
                      {"seconds", m.seconds}});
  }
  const json j = {{"schema", 1},
                  {"repetition", r.repetition},
                  {"split_seed", r.split_seed},
                  {"split_hashes", {{"train", r.train_hash}, {"validation", r.validation_hash}, {"test", r.test_hash}}},
                  {"split_sizes", {{"train", r.n_train}, {"validation", r.n_validation}, {"test", r.n_test}}},
                  {"models", std::move(models)}};
  write_file(path, j.dump(2) + "\n");
}

TrainingRecord read_training_record(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string() + " (run train first)");
  try {
    const json j = json::parse(in);
    TrainingRecord r;
    r.repetition = j.at("repetition").get<std::size_t>();
    r.split_seed = j.at("split_seed").get<std::uint64_t>();
    r.train_hash = j.at("split_hashes").at("train").get<std::uint64_t>();
    r.validation_hash = j.at("split_hashes").at("validation").get<std::uint64_t>();
    r.test_hash = j.at("split_hashes").at("test").get<std::uint64_t>();
    r.n_train = j.at("split_sizes").at("train").get<std::size_t>();
    r.n_validation = j.at("split_sizes").at("validation").get<std::size_t>();
    r.n_test = j.at("split_sizes").at("test").get<std::size_t>();
    for (const json& o : j.at("models")) {
      TrainedModel m;
      m.model = o.at("model").get<std::string>();
      m.ok = o.at("ok").get<bool>();
      m.error = o.at("error").get<std::string>();
      m.bundles = o.at("bundles").get<std::vector<std::string>>();
      m.epochs_run = o.at("epochs_run").get<std::size_t>();
      if (m.ok) {
        m.final_train_loss = o.at("final_train_loss").get<double>();
        m.final_validation_loss = o.at("final_validation_loss").is_null() ? 0.0 : o.at("final_validation_loss").get<double>();
      }
      m.seconds = o.at("seconds").get<double>();
      r.models.push_back(std::move(m));
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<RawTrial> load_trials(const ExperimentConfig& config) {
  const fs::path p = config.dataset_dir();
  if (fs::is_directory(p)) return read_dataset(p);
  if (fs::is_regular_file(p)) return read_trials(p);
  throw DataError("no dataset at " + p.string() + " (run generate first)");
}

PreparedRepetition prepare_repetition(const ExperimentConfig& config, const std::vector<ProcessedTrial>& trials,
                                      std::size_t rep) {
  PreparedRepetition p;
  p.split_seed = config.repetition_seed(rep);
  Rng rng(p.split_seed);
  p.split = split_dataset(trials, rng);
  p.stats = normalize(p.split);
  return p;
}

std::size_t cmd_generate(const ExperimentConfig& config) {
  config.validate();
  SynthConfig sc = config.synth;
  sc.seed = config.seed;
  const auto trials = generate_dataset(sc);
  write_dataset(config.dataset_dir(), trials, sc);
  say(config, "generated " + std::to_string(trials.size()) + " trials in " + config.dataset_dir().string());
  return trials.size();
}

namespace {

template <typename Train>
void train_one(TrainedModel& rec, Train train) {
  const auto start = std::chrono::steady_clock::now();
  try {
    train();
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
    rec.bundles.clear();
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

TrainingRecord train_repetition(const ExperimentConfig& config, const std::vector<ProcessedTrial>& trials,
                                std::size_t rep) {
  const PreparedRepetition prep = prepare_repetition(config, trials, rep);
  const fs::path dir = config.repetition_dir(rep);
  make_dirs(dir / "models");
  TrainingRecord record;
  record.repetition = rep;
  record.split_seed = prep.split_seed;
  record.train_hash = split_hash(prep.split.train);
  record.validation_hash = split_hash(prep.split.validation);
  record.test_hash = split_hash(prep.split.test);
  record.n_train = prep.split.train.size();
  record.n_validation = prep.split.validation.size();
  record.n_test = prep.split.test.size();
  const SequenceBatch train = to_batch(prep.split.train);
  const SequenceBatch val = to_batch(prep.split.validation);

  // MTM doubles as the PSC classifier, so it is trained at most once.
  std::optional<LstmTrainResult> mtm;
  std::string mtm_error;
  auto train_lstm = [&](LstmVariant v) {
    const std::string name(variant_name(v));
    const LstmModelConfig cfg = config.lstm_config(v);
    Rng rng(ExperimentConfig::model_seed(prep.split_seed, name));
    say(config, "rep " + std::to_string(rep) + " training " + name);
    auto result = train_model(cfg, train, val, rng, progress(config, rep, name, cfg.epochs));
    save_bundle(dir / "models" / (name + ".bin"), result.model);
    write_file(dir / "models" / (name + ".loss.csv"), loss_csv(result.history));
    return result;
  };
  auto get_mtm = [&]() -> const LstmTrainResult& {
    if (!mtm && mtm_error.empty()) {
      try {
        mtm = train_lstm(LstmVariant::kMtm);
      } catch (const std::exception& e) {
        mtm_error = e.what();
      }
    }
    if (!mtm) throw TrainingError("MTM: " + mtm_error);
    return *mtm;
  };

  for (const auto& name : ordered_roster(config)) {
    TrainedModel rec;
    rec.model = name;
    train_one(rec, [&] {
      if (name == "MTM") {
        const auto& r = get_mtm();
        rec.bundles = {"models/MTM.bin"};
        rec.epochs_run = r.model.info.epochs_run;
        rec.final_train_loss = r.model.info.final_train_loss;
        rec.final_validation_loss = r.model.info.final_validation_loss;
      } else if (name == "PSC") {
        const auto& cls = get_mtm();
        save_bundle(dir / "models" / "PSC.classifier.bin", cls.model);
        const auto pred = train_lstm(LstmVariant::kPredictor);
        rec.bundles = {"models/PSC.classifier.bin", "models/PREDICTOR.bin"};
        rec.epochs_run = pred.model.info.epochs_run;
        rec.final_train_loss = pred.model.info.final_train_loss;
        rec.final_validation_loss = pred.model.info.final_validation_loss;
      } else if (const auto v = parse_lstm_variant(name)) {
        const auto r = train_lstm(*v);
        rec.bundles = {"models/" + name + ".bin"};
        rec.epochs_run = r.model.info.epochs_run;
        rec.final_train_loss = r.model.info.final_train_loss;
        rec.final_validation_loss = r.model.info.final_validation_loss;
      } else {
        const TcnConfig cfg = config.tcn_config(name);
        Rng rng(ExperimentConfig::model_seed(prep.split_seed, name));
        say(config, "rep " + std::to_string(rep) + " training " + name);
        const auto r = train_tcn(cfg, train, val, rng, progress(config, rep, name, cfg.epochs));
        save_bundle(dir / "models" / (name + ".bin"), r.model);
        write_file(dir / "models" / (name + ".loss.csv"), loss_csv(r.history));
        rec.bundles = {"models/" + name + ".bin"};
        rec.epochs_run = r.model.info.epochs_run;
        rec.final_train_loss = r.model.info.final_train_loss;
        rec.final_validation_loss = r.model.info.final_validation_loss;
      }
    });
    if (!rec.ok) say(config, "rep " + std::to_string(rep) + " " + name + " failed: " + rec.error);
    record.models.push_back(std::move(rec));
  }
  write_training_record(dir / "training.json", record);
  return record;
}

std::vector<ProcessedTrial> processed_dataset(const ExperimentConfig& config) {
  const auto raw = load_trials(config);
  return preprocess_all(raw);
}

LstmModel load_lstm(const fs::path& path, LstmVariant expected) {
  LoadedBundle b = load_bundle(path);
  if (!b.lstm || b.lstm->config.variant != expected) {
    throw DataError(path.string() + " holds " + b.variant() + ", expected " + std::string(variant_name(expected)));
  }
  return std::move(*b.lstm);
}

TcnModel load_tcn(const fs::path& path, const std::string& expected) {
  LoadedBundle b = load_bundle(path);
  if (!b.tcn || b.tcn->config.name != expected) {
    throw DataError(path.string() + " holds " + b.variant() + ", expected " + expected);
  }
  return std::move(*b.tcn);
}

void write_traces(const fs::path& path, const std::vector<TrialEvaluation>& evals,
                  std::span<const ProcessedTrial> trials, const std::vector<bool>& warmup) {
  std::string s = "trial_id,history_step,output,is_warmup,ball_hand_distance\n";
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const auto& e = evals[i];
    for (std::size_t t = 1; t <= e.trace.size(); ++t) {
      const bool w = !warmup.empty() && warmup[t - 1];
      s += std::to_string(e.trial_id) + "," + std::to_string(t) + "," + fmt(e.trace[t - 1]) + "," + (w ? "1" : "0") +
           "," + fmt(ball_hand_distance(trials[i], t - 1)) + "\n";
    }
  }
  write_file(path, s);
}

void write_predictions(const fs::path& path, const PscEvaluation& psc, std::size_t features) {
  std::string s = "trial_id,history_step,forecast_step";
  for (std::size_t f = 0; f < features; ++f) s += "," + feature_name(f);
  s += "\n";
  std::ofstream out(path.string() + ".tmp", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << s;
  for (std::size_t i = 0; i < psc.evals.size(); ++i) {
    const auto& per_t = psc.predictions[i];
    for (std::size_t t = 1; t <= per_t.size(); ++t) {
      const auto& p = per_t[t - 1];
      for (std::size_t k = 0; k * features < p.size(); ++k) {
        out << psc.evals[i].trial_id << ',' << t << ',' << (t + k + 1);
        for (std::size_t f = 0; f < features; ++f) out << ',' << fmt(p[k * features + f]);
        out << '\n';
      }
    }
  }
  out.close();
  if (!out) throw DataError("error while writing " + path.string());
  std::error_code ec;
  fs::rename(path.string() + ".tmp", path, ec);
  if (ec) throw DataError("cannot move predictions into place: " + ec.message());
}

RepetitionReport evaluate_repetition(const ExperimentConfig& config, const std::vector<ProcessedTrial>& trials,
                                     std::size_t rep, std::size_t workers) {
  const fs::path dir = config.repetition_dir(rep);
  const TrainingRecord record = read_training_record(dir / "training.json");
  const PreparedRepetition prep = prepare_repetition(config, trials, rep);
  const auto& test = prep.split.test;
  if (split_hash(test) != record.test_hash || record.split_seed != prep.split_seed) {
    throw DataError("repetition " + std::to_string(rep) + ": the test split differs from the one used in training");
  }
  RepetitionReport report;
  report.index = rep;
  report.split_seed = prep.split_seed;
  report.test_hash = record.test_hash;
  report.n_test = test.size();
  if (config.emit_traces) make_dirs(dir / "traces");
  if (config.emit_predictions) make_dirs(dir / "predictions");

  for (const auto& name : ordered_roster(config)) {
    ModelResult res;
    res.model = name;
    const TrainedModel* tm = record.find(name);
    if (!tm) throw DataError("repetition " + std::to_string(rep) + " has no training record for " + name);
    if (!tm->ok) {
      res.error = tm->error;
      report.models.push_back(std::move(res));
      continue;
    }
    say(config, "rep " + std::to_string(rep) + " evaluating " + name);
    std::vector<TrialEvaluation> evals;
    std::vector<bool> warmup;
    if (name == "PSC") {
      const LstmModel cls = load_lstm(dir / tm->bundles.at(0), LstmVariant::kMtm);
      const LstmModel pred = load_lstm(dir / tm->bundles.at(1), LstmVariant::kPredictor);
      PscConfig pc;
      pc.warmup = config.warmup;
      pc.keep_predictions = config.emit_predictions;
      PscEvaluation psc = evaluate_psc(cls, pred, test, pc, workers);
      if (config.emit_predictions) write_predictions(dir / "predictions" / "PSC.csv", psc, cls.config.input_features);
      evals = std::move(psc.evals);
      warmup = std::move(psc.warmup);
    } else if (const auto v = parse_lstm_variant(name)) {
      evals = evaluate_lstm(load_lstm(dir / tm->bundles.at(0), *v), test, workers);
    } else {
      evals = evaluate_tcn(load_tcn(dir / tm->bundles.at(0), name), test, workers);
    }
    res.ok = true;
    res.metrics = aggregate(name, evals, config.thresholds);
    if (config.emit_traces) write_traces(dir / "traces" / (name + ".csv"), evals, test, warmup);
    report.models.push_back(std::move(res));
  }
  write_repetition_json(dir / "report.json", report);
  write_accuracy_csv(dir / "accuracy_curves.csv", report);
  write_decisions_csv(dir / "decisions.csv", report);
  return report;
}

}  // namespace

std::vector<TrainingRecord> cmd_train(const ExperimentConfig& config) {
  config.validate();
  const auto trials = processed_dataset(config);
  std::vector<TrainingRecord> records(config.repetitions);
  parallel_for(config.repetitions, config.workers,
               [&](std::size_t r) { records[r] = train_repetition(config, trials, r); });
  return records;
}

std::vector<RepetitionReport> cmd_evaluate(const ExperimentConfig& config) {
  config.validate();
  const auto trials = processed_dataset(config);
  std::vector<RepetitionReport> reports(config.repetitions);
  const std::size_t inner = config.repetitions == 1 ? config.workers : 1;
  parallel_for(config.repetitions, config.workers,
               [&](std::size_t r) { reports[r] = evaluate_repetition(config, trials, r, inner); });
  return reports;
}

ExperimentReport cmd_report(const ExperimentConfig& config) {
  config.validate();
  ExperimentReport report;
  report.seed = config.seed;
  report.preset = std::string(preset_name(config.preset));
  report.roster = ordered_roster(config);
  for (std::size_t r = 0; r < config.repetitions; ++r) {
    report.repetitions.push_back(read_repetition_json(config.repetition_dir(r) / "report.json"));
  }
  report.means = mean_reports(report.repetitions, report.roster);
  make_dirs(config.out);
  write_experiment_json(config.out / "report.json", report);
  write_accuracy_csv(config.out / "accuracy_curves.csv", report.means);
  write_decisions_csv(config.out / "decisions.csv", report.means);
  write_file(config.out / "summary.txt", render_summary(report));
  return report;
}

}  // namespace earlycast
