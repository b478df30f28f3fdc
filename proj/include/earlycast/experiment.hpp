#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "earlycast/data.hpp"
#include "earlycast/lstm_model.hpp"
#include "earlycast/metrics.hpp"
#include "earlycast/report.hpp"
#include "earlycast/tcn_model.hpp"

namespace earlycast {

enum class Preset { kFull, kDesk };

std::string_view preset_name(Preset preset);
std::optional<Preset> parse_preset(std::string_view name);

/// Roster names in report order.
const std::vector<std::string>& all_models();
bool is_known_model(std::string_view name);

struct ExperimentConfig {
  std::uint64_t seed = 1;
  Preset preset = Preset::kFull;
  std::size_t repetitions = 10;
  /// trial_count and the generator ranges; the generator seed is `seed`.
  SynthConfig synth;
  /// Existing dataset directory (manifest.json + trials.csv) or trial CSV.
  /// Empty: <out>/dataset, written by generate.
  std::filesystem::path dataset;
  std::vector<std::string> models = all_models();
  DecisionThresholds thresholds;
  std::size_t warmup = 10;
  std::filesystem::path out = "earlycast_out";
  std::size_t workers = 1;
  bool emit_traces = false;
  bool emit_predictions = false;
  /// Per-model epoch overrides keyed by MTO, MTM, HYB, PREDICTOR, TCN10,
  /// TCN30 or TCN60.
  std::map<std::string, std::size_t> epochs;
  /// Progress lines; may be called from several threads.
  std::function<void(const std::string&)> log;

  /// full: 1975 trials, 10 repetitions, paper epochs. desk: 400 trials,
  /// 3 repetitions, 50 LSTM and 100 TCN epochs.
  static ExperimentConfig for_preset(Preset preset);

  void validate() const;
  std::filesystem::path dataset_dir() const;
  std::filesystem::path repetition_dir(std::size_t rep) const;
  std::uint64_t repetition_seed(std::size_t rep) const;
  static std::uint64_t model_seed(std::uint64_t repetition_seed, std::string_view model);
  LstmModelConfig lstm_config(LstmVariant variant) const;
  TcnConfig tcn_config(std::string_view name) const;
  /// Canonical key=value text of everything that affects results.
  std::string canonical() const;
};

struct TrainedModel {
  std::string model;
  bool ok = false;
  std::string error;
  std::vector<std::string> bundles;  // relative to the repetition directory
  std::size_t epochs_run = 0;
  double final_train_loss = 0.0;
  double final_validation_loss = 0.0;
  double seconds = 0.0;
};

/// Written to rep<r>/training.json.
struct TrainingRecord {
  std::size_t repetition = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t train_hash = 0, validation_hash = 0, test_hash = 0;
  std::size_t n_train = 0, n_validation = 0, n_test = 0;
  std::vector<TrainedModel> models;

  const TrainedModel* find(const std::string& model) const;
  bool any_failed() const;
};

void write_training_record(const std::filesystem::path& path, const TrainingRecord& record);
TrainingRecord read_training_record(const std::filesystem::path& path);

struct PreparedRepetition {
  std::uint64_t split_seed = 0;
  DatasetSplit split;  // normalized
  NormStats stats;
};

/// Raw trials of the configured dataset.
std::vector<RawTrial> load_trials(const ExperimentConfig& config);
/// Split and normalization of repetition `rep`, from preprocessed trials.
PreparedRepetition prepare_repetition(const ExperimentConfig& config, const std::vector<ProcessedTrial>& trials,
                                      std::size_t rep);

/// Writes <out>/dataset. Returns the trial count.
std::size_t cmd_generate(const ExperimentConfig& config);
/// Trains every roster model of every repetition. A failing model is
/// recorded and skipped; the others still train.
std::vector<TrainingRecord> cmd_train(const ExperimentConfig& config);
/// Scores the bundles of every repetition on its test split.
std::vector<RepetitionReport> cmd_evaluate(const ExperimentConfig& config);
/// Cross-repetition means, report.json, CSVs and summary.txt under <out>.
ExperimentReport cmd_report(const ExperimentConfig& config);

}  // namespace earlycast
