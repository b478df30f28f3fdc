#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "earlycast/data.hpp"

namespace earlycast {

struct DecisionThresholds {
  double hi = 0.75;
  double lo = 0.25;
  double round = 0.5;

  void validate() const;
};

/// Classifier output per history size for one trial.
struct TrialEvaluation {
  std::uint64_t trial_id = 0;
  /// trace[t - 1] is the output given the first t frames.
  std::vector<double> trace;
  int label = 0;
  std::size_t contact_frame = 0;
  DropKind drop_kind = DropKind::kUnknown;
};

struct AccuracyCurve {
  std::size_t n = 0;
  std::vector<double> accuracy;        // correct / n, per history size
  std::vector<std::size_t> correct;    // decisive and correct
  std::vector<std::size_t> decisive;   // decisions taken (n for the 50 % rule)
};

/// round(y) == z with ties (y == 0.5) rounded up.
AccuracyCurve accuracy_curve_50(std::span<const TrialEvaluation> evals, const DecisionThresholds& th = {});
/// Decision 1 if y >= hi, 0 if y <= lo, otherwise none (counted as wrong).
AccuracyCurve accuracy_curve_75(std::span<const TrialEvaluation> evals, const DecisionThresholds& th = {});

/// Time to decision as a 1-based history size: the last step at which the
/// trace crosses into a decision region, provided the final output lies in
/// one. A trace decided from step 1 without crossings yields 1.
std::optional<std::size_t> ttd(std::span<const double> trace, const DecisionThresholds& th = {});
/// ttd() when the final decision (1 iff y^T >= hi) matches the label.
std::optional<std::size_t> ttcd(std::span<const double> trace, int label, const DecisionThresholds& th = {});

struct DecisionSummary {
  std::size_t n_decisions = 0;
  std::size_t n_correct = 0;
  double ttd_sum = 0.0;   // in steps, over defined values
  double ttcd_sum = 0.0;
  std::optional<double> mttd_steps;
  std::optional<double> mttcd_steps;
};

struct MetricsReport {
  std::string model;
  std::size_t n = 0;
  AccuracyCurve acc50;
  AccuracyCurve acc75;
  DecisionSummary decisions;
  /// Catch and miss trials, decided at the history ending just before first contact.
  std::size_t early_pool = 0;
  std::size_t early_decisive = 0;
  std::size_t early_correct = 0;
};

inline constexpr double kContactMs = 400.0;

inline std::optional<double> steps_to_ms(std::optional<double> steps) {
  if (!steps) return std::nullopt;
  return *steps * kFrameMs;
}

MetricsReport aggregate(const std::string& model, std::span<const TrialEvaluation> evals,
                        const DecisionThresholds& th = {});

}  // namespace earlycast
