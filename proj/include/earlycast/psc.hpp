#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "earlycast/lstm_model.hpp"
#include "earlycast/tensor.hpp"

namespace earlycast {

/// Batched recurrent model advanced one observation at a time. Clones carry
/// the full recurrent state, so a clone can be unrolled without touching the
/// original.
class SequenceStepper {
 public:
  virtual ~SequenceStepper() = default;
  virtual std::unique_ptr<SequenceStepper> clone() const = 0;
  /// `x` is [B x F].
  virtual void step(const double* x) = 0;
  /// Classifier: [B] probabilities. Predictor: [B x F] next observations.
  virtual std::span<const double> output() const = 0;
  virtual std::size_t batch() const = 0;
};

class LstmClassifierStepper final : public SequenceStepper {
 public:
  LstmClassifierStepper(const LstmModel& model, std::size_t batch);
  std::unique_ptr<SequenceStepper> clone() const override;
  void step(const double* x) override { runner_.step(x); }
  std::span<const double> output() const override { return runner_.classification(); }
  std::size_t batch() const override { return runner_.batch(); }

 private:
  LstmRunner runner_;
};

class LstmPredictorStepper final : public SequenceStepper {
 public:
  LstmPredictorStepper(const LstmModel& model, std::size_t batch);
  std::unique_ptr<SequenceStepper> clone() const override;
  void step(const double* x) override { runner_.step(x); }
  std::span<const double> output() const override { return runner_.prediction(); }
  std::size_t batch() const override { return runner_.batch(); }

 private:
  LstmRunner runner_;
};

/// Predictor that ignores its input and, after k steps, reports the true
/// observation k + 1 of `series` ([B x T x F]); zeros past the end.
class OraclePredictor final : public SequenceStepper {
 public:
  explicit OraclePredictor(const Tensor& series);
  std::unique_ptr<SequenceStepper> clone() const override;
  void step(const double* x) override;
  std::span<const double> output() const override { return out_; }
  std::size_t batch() const override { return batch_; }

 private:
  const Tensor* series_;
  std::size_t batch_, steps_, features_;
  std::size_t taken_ = 0;
  std::vector<double> out_;
};

/// Predictor that always reports zeros.
class ZeroPredictor final : public SequenceStepper {
 public:
  ZeroPredictor(std::size_t batch, std::size_t features) : out_(batch * features, 0.0), batch_(batch) {}
  std::unique_ptr<SequenceStepper> clone() const override { return std::make_unique<ZeroPredictor>(*this); }
  void step(const double*) override {}
  std::span<const double> output() const override { return out_; }
  std::size_t batch() const override { return batch_; }

 private:
  std::vector<double> out_;
  std::size_t batch_;
};

struct PscConfig {
  /// Histories shorter than this use the plain classifier output.
  std::size_t warmup = 10;
  /// Compute only this history size (1-based); other entries stay NaN.
  std::optional<std::size_t> only_history;
  /// Keep the predicted continuation of every history.
  bool keep_predictions = false;

  void validate(std::size_t steps) const;
};

struct PscCounters {
  std::size_t classifier_unroll_steps = 0;
  std::size_t predictor_unroll_steps = 0;
};

struct PscResult {
  /// [B x T]; entry (b, t - 1) is the output for history size t.
  std::vector<double> output;
  /// Per history size: true when the warm-up rule applied.
  std::vector<bool> warmup;
  /// With keep_predictions: predictions[t - 1] is [B x (T - t) x F], the
  /// forecast observations t + 1 .. T.
  std::vector<std::vector<double>> predictions;
  std::size_t batch = 0;
  std::size_t steps = 0;
};

/// Classifies every prefix of `series` ([B x T x F]) by completing it with
/// the predictor's forecast and reading the classifier at step T. Counts are
/// per batch, not per row.
PscResult psc_classify(const PscConfig& config, const SequenceStepper& classifier,
                       const SequenceStepper& predictor, const Tensor& series, PscCounters* counters = nullptr);

/// Convenience wrapper over two trained LSTM models.
PscResult psc_classify(const PscConfig& config, const LstmModel& classifier, const LstmModel& predictor,
                       const Tensor& series, PscCounters* counters = nullptr);

}  // namespace earlycast
