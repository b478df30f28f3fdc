// earlycast: generate data, train, evaluate and summarize the model roster.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "earlycast/error.hpp"
#include "earlycast/experiment.hpp"

namespace pt = boost::property_tree;
using namespace earlycast;

namespace {

constexpr int kOk = 0, kUsage = 1, kData = 2, kTraining = 3;

struct UsageError : Error {
  using Error::Error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  std::optional<std::string> models;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
  bool emit_traces = false;
  bool emit_predictions = false;
  std::optional<std::size_t> repetitions;
  std::optional<std::size_t> trials;
  std::optional<std::string> dataset;
  std::optional<std::size_t> warmup;
  std::vector<std::string> epochs;
  bool quiet = false;
};

template <typename T>
T ini_value(const pt::ptree& tree, const std::string& key) {
  try {
    return tree.get<T>(key);
  } catch (const pt::ptree_error& e) {
    throw UsageError("config: bad value for " + key + ": " + e.what());
  }
}

void apply_epoch(ExperimentConfig& c, const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(value, &used);
    if (used != value.size() || n <= 0) throw std::invalid_argument(value);
    c.epochs[key] = static_cast<std::size_t>(n);
  } catch (const std::logic_error&) {
    throw UsageError("epochs for " + key + " must be a positive integer, got " + value);
  }
}

// [experiment], [data], [epochs] and [thresholds] sections plus a top-level
// schema = 1.
void apply_file(ExperimentConfig& c, const pt::ptree& tree) {
  static const std::map<std::string, std::vector<std::string>> known{
      {"experiment", {"seed", "preset", "repetitions", "models", "workers", "out", "dataset", "warmup",
                      "emit_traces", "emit_predictions"}},
      {"data", {"trials", "success_ratio", "jump_off_fraction"}},
      {"epochs", {"MTO", "MTM", "HYB", "PREDICTOR", "TCN10", "TCN30", "TCN60"}},
      {"thresholds", {"hi", "lo", "round"}},
  };
  for (const auto& [section, body] : tree) {
    if (section == "schema") {
      if (body.get_value<std::string>() != "1") throw UsageError("config: unsupported schema " + body.data());
      continue;
    }
    const auto it = known.find(section);
    if (it == known.end()) throw UsageError("config: unknown section [" + section + "]");
    for (const auto& [key, _] : body) {
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
        throw UsageError("config: unknown key " + key + " in [" + section + "]");
      }
    }
  }
  if (!tree.get_optional<std::string>("schema")) throw UsageError("config: missing schema = 1");
  if (auto s = tree.get_child_optional("experiment")) {
    const auto& e = *s;
    if (e.count("seed")) c.seed = ini_value<std::uint64_t>(e, "seed");
    if (e.count("repetitions")) c.repetitions = ini_value<std::size_t>(e, "repetitions");
    if (e.count("models")) c.models = split_list(e.get<std::string>("models"));
    if (e.count("workers")) c.workers = ini_value<std::size_t>(e, "workers");
    if (e.count("out")) c.out = e.get<std::string>("out");
    if (e.count("dataset")) c.dataset = e.get<std::string>("dataset");
    if (e.count("warmup")) c.warmup = ini_value<std::size_t>(e, "warmup");
    if (e.count("emit_traces")) c.emit_traces = ini_value<bool>(e, "emit_traces");
    if (e.count("emit_predictions")) c.emit_predictions = ini_value<bool>(e, "emit_predictions");
  }
  if (auto s = tree.get_child_optional("data")) {
    if (s->count("trials")) c.synth.trial_count = ini_value<std::size_t>(*s, "trials");
    if (s->count("success_ratio")) c.synth.success_ratio = ini_value<double>(*s, "success_ratio");
    if (s->count("jump_off_fraction")) c.synth.jump_off_fraction = ini_value<double>(*s, "jump_off_fraction");
  }
  if (auto s = tree.get_child_optional("epochs")) {
    for (const auto& [key, v] : *s) apply_epoch(c, key, v.data());
  }
  if (auto s = tree.get_child_optional("thresholds")) {
    if (s->count("hi")) c.thresholds.hi = ini_value<double>(*s, "hi");
    if (s->count("lo")) c.thresholds.lo = ini_value<double>(*s, "lo");
    if (s->count("round")) c.thresholds.round = ini_value<double>(*s, "round");
  }
}

ExperimentConfig build_config(const Flags& f) {
  pt::ptree tree;
  if (!f.config.empty()) {
    try {
      pt::read_ini(f.config, tree);
    } catch (const pt::ini_parser_error& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }
  std::string preset = "full";
  if (auto p = tree.get_optional<std::string>("experiment.preset")) preset = *p;
  if (f.preset) preset = *f.preset;
  const auto parsed = parse_preset(preset);
  if (!parsed) throw UsageError("unknown preset " + preset + " (full or desk)");
  ExperimentConfig c = ExperimentConfig::for_preset(*parsed);
  if (const char* env = std::getenv("EARLYCAST_OUT"); env && *env) c.out = env;
  if (!f.config.empty()) apply_file(c, tree);

  if (f.seed) c.seed = *f.seed;
  if (f.models) c.models = split_list(*f.models);
  if (f.workers) c.workers = *f.workers;
  if (f.out) c.out = *f.out;
  if (f.emit_traces) c.emit_traces = true;
  if (f.emit_predictions) c.emit_predictions = true;
  if (f.repetitions) c.repetitions = *f.repetitions;
  if (f.trials) c.synth.trial_count = *f.trials;
  if (f.dataset) c.dataset = *f.dataset;
  if (f.warmup) c.warmup = *f.warmup;
  for (const auto& kv : f.epochs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--epochs expects MODEL=N, got " + kv);
    apply_epoch(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

int train_status(const std::vector<TrainingRecord>& records) {
  for (const auto& r : records)
    if (r.any_failed()) return kTraining;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early catch/drop classification experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "INI file with [experiment], [data], [epochs] and [thresholds] sections")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "Master seed");
  app.add_option("--preset", f.preset, "full or desk")->check(CLI::IsMember({"full", "desk"}));
  app.add_option("--models", f.models, "Comma-separated roster: MTO,MTM,HYB,PSC,TCN10,TCN30,TCN60");
  app.add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", f.out, "Output directory (default $EARLYCAST_OUT or ./earlycast_out)");
  app.add_flag("--emit-traces", f.emit_traces, "Write per-trial output traces");
  app.add_flag("--emit-predictions", f.emit_predictions, "Write the PSC forecasts for every history size");
  app.add_option("--repetitions", f.repetitions, "Random splits to train and score")->check(CLI::PositiveNumber);
  app.add_option("--trials", f.trials, "Trials to generate")->check(CLI::PositiveNumber);
  app.add_option("--dataset", f.dataset, "Existing dataset directory or trial CSV");
  app.add_option("--warmup", f.warmup, "PSC warm-up steps");
  app.add_option("--epochs", f.epochs, "Epoch override MODEL=N (repeatable)");
  app.add_flag("-q,--quiet", f.quiet, "No progress output");

  auto* gen = app.add_subcommand("generate", "Write the synthetic dataset");
  auto* train = app.add_subcommand("train", "Train the roster on every repetition's split");
  auto* eval = app.add_subcommand("evaluate", "Score trained bundles on the test splits");
  auto* report = app.add_subcommand("report", "Average repetitions and write summary.txt");
  auto* all = app.add_subcommand("all", "generate, train, evaluate and report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  std::mutex log_mutex;
  try {
    ExperimentConfig c = build_config(f);
    if (!f.quiet) {
      c.log = [&log_mutex](const std::string& line) {
        std::lock_guard lock(log_mutex);
        std::cerr << line << '\n';
      };
    }
    int status = kOk;
    if (gen->parsed() || all->parsed()) cmd_generate(c);
    if (train->parsed() || all->parsed()) status = train_status(cmd_train(c));
    if (eval->parsed() || all->parsed()) cmd_evaluate(c);
    if (report->parsed() || all->parsed()) {
      const ExperimentReport r = cmd_report(c);
      std::cout << render_summary(r);
    }
    return status;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
