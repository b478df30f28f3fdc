#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "earlycast/metrics.hpp"

namespace earlycast {

/// One model in one repetition. Failed models carry no metrics.
struct ModelResult {
  std::string model;
  bool ok = false;
  std::string error;
  MetricsReport metrics;
};

struct RepetitionReport {
  std::size_t index = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t test_hash = 0;
  std::size_t n_test = 0;
  std::vector<ModelResult> models;

  const ModelResult* find(const std::string& model) const;
};

/// Cross-repetition view of one model.
struct MeanModelReport {
  std::string model;
  std::size_t repetitions = 0;  // successful ones
  std::size_t failures = 0;
  std::size_t n_per_repetition = 0;
  std::vector<double> acc50_mean, acc50_std;
  std::vector<double> acc75_mean, acc75_std;
  std::vector<double> decisive75_mean;
  /// Pooled over repetitions.
  std::size_t n_decisions = 0;
  std::size_t n_correct = 0;
  std::optional<double> mttd_steps;
  std::optional<double> mttcd_steps;
  std::vector<std::optional<double>> mttd_per_repetition;
  std::vector<std::optional<double>> mttcd_per_repetition;
  std::size_t early_pool = 0;
  std::size_t early_decisive = 0;
  std::size_t early_correct = 0;
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  std::string preset;
  std::vector<std::string> roster;
  std::vector<RepetitionReport> repetitions;
  std::vector<MeanModelReport> means;

  const MeanModelReport* find(const std::string& model) const;
};

/// Population mean and standard deviation per history size, pooled counts
/// and per-repetition means. Models keep roster order.
std::vector<MeanModelReport> mean_reports(const std::vector<RepetitionReport>& reps,
                                          const std::vector<std::string>& roster);

void write_repetition_json(const std::filesystem::path& path, const RepetitionReport& rep);
RepetitionReport read_repetition_json(const std::filesystem::path& path);
void write_experiment_json(const std::filesystem::path& path, const ExperimentReport& report);
ExperimentReport read_experiment_json(const std::filesystem::path& path);

/// model, threshold, history_step, accuracy, decisive_count
void write_accuracy_csv(const std::filesystem::path& path, const RepetitionReport& rep);
/// Same columns from the cross-repetition means (decisive_count is the mean).
void write_accuracy_csv(const std::filesystem::path& path, const std::vector<MeanModelReport>& means);
/// model, n_decisions, mttd_ms, mttd_delta_ms, n_correct, mttcd_ms, mttcd_delta_ms
void write_decisions_csv(const std::filesystem::path& path, const RepetitionReport& rep);
void write_decisions_csv(const std::filesystem::path& path, const std::vector<MeanModelReport>& means);

/// Decision-time table with signed distances to first contact, full-history
/// accuracy and per-repetition MTTcD. No timings, so equal inputs render
/// equal bytes.
std::string render_summary(const ExperimentReport& report);

}  // namespace earlycast
