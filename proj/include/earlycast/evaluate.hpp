#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "earlycast/data.hpp"
#include "earlycast/lstm_model.hpp"
#include "earlycast/metrics.hpp"
#include "earlycast/psc.hpp"
#include "earlycast/tcn_model.hpp"

namespace earlycast {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception (lowest index) is rethrown after all threads finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Evaluation traces: one eval-mode pass per chunk of trials. Every model is
/// causal, so step t of the pass is the output for the first t frames.
std::vector<TrialEvaluation> evaluate_lstm(const LstmModel& model, std::span<const ProcessedTrial> trials,
                                           std::size_t workers = 1);
std::vector<TrialEvaluation> evaluate_tcn(const TcnModel& model, std::span<const ProcessedTrial> trials,
                                          std::size_t workers = 1);

struct PscEvaluation {
  std::vector<TrialEvaluation> evals;
  /// warmup[t - 1] is true for histories answered by the plain classifier.
  std::vector<bool> warmup;
  /// With config.keep_predictions: per trial, per history size, the
  /// [(T - t) x F] forecast.
  std::vector<std::vector<std::vector<double>>> predictions;
};

PscEvaluation evaluate_psc(const LstmModel& classifier, const LstmModel& predictor,
                          std::span<const ProcessedTrial> trials, const PscConfig& config = {},
                          std::size_t workers = 1);

/// Output at step t of `full` (a [T] trace) against a fresh pass over the
/// first t frames only, for `pairs` random (trial, t) draws. Returns the
/// number of mismatches (bitwise comparison).
std::size_t truncation_mismatches(const std::function<std::vector<double>(const Tensor&)>& forward,
                                  std::span<const ProcessedTrial> trials, std::size_t pairs, Rng& rng);

}  // namespace earlycast
