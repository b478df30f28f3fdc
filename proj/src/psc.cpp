#include "earlycast/psc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "earlycast/error.hpp"

namespace earlycast {

LstmClassifierStepper::LstmClassifierStepper(const LstmModel& model, std::size_t batch) : runner_(model, batch) {
  if (!model.config.has_classifier()) throw Error("model has no classification head");
}

std::unique_ptr<SequenceStepper> LstmClassifierStepper::clone() const {
  return std::make_unique<LstmClassifierStepper>(*this);
}

LstmPredictorStepper::LstmPredictorStepper(const LstmModel& model, std::size_t batch) : runner_(model, batch) {
  if (!model.config.has_predictor()) throw Error("model has no prediction head");
}

std::unique_ptr<SequenceStepper> LstmPredictorStepper::clone() const {
  return std::make_unique<LstmPredictorStepper>(*this);
}

OraclePredictor::OraclePredictor(const Tensor& series) : series_(&series) {
  if (series.rank() != 3) throw ShapeError("oracle predictor expects [B x T x F] series");
  batch_ = series.dim(0);
  steps_ = series.dim(1);
  features_ = series.dim(2);
  out_.assign(batch_ * features_, 0.0);
}

std::unique_ptr<SequenceStepper> OraclePredictor::clone() const { return std::make_unique<OraclePredictor>(*this); }

void OraclePredictor::step(const double*) {
  ++taken_;
  if (taken_ >= steps_) {
    std::fill(out_.begin(), out_.end(), 0.0);
    return;
  }
  const double* s = series_->raw();
  for (std::size_t b = 0; b < batch_; ++b) {
    const double* row = s + (b * steps_ + taken_) * features_;
    std::copy(row, row + features_, out_.begin() + static_cast<std::ptrdiff_t>(b * features_));
  }
}

void PscConfig::validate(std::size_t steps) const {
  if (warmup == 0 || warmup > steps) {
    throw Error("warm-up " + std::to_string(warmup) + " outside 1.." + std::to_string(steps));
  }
  if (only_history && (*only_history == 0 || *only_history > steps)) {
    throw Error("history size " + std::to_string(*only_history) + " outside 1.." + std::to_string(steps));
  }
}

PscResult psc_classify(const PscConfig& config, const SequenceStepper& classifier, const SequenceStepper& predictor,
                       const Tensor& series, PscCounters* counters) {
  if (series.rank() != 3) throw ShapeError("psc expects [B x T x F] series, got " + shape_string(series.shape()));
  const std::size_t B = series.dim(0), T = series.dim(1), F = series.dim(2);
  config.validate(T);
  if (classifier.batch() != B || predictor.batch() != B) {
    throw ShapeError("stepper batch does not match series batch " + std::to_string(B));
  }

  PscResult r;
  r.batch = B;
  r.steps = T;
  r.output.assign(B * T, std::numeric_limits<double>::quiet_NaN());
  r.warmup.assign(T, false);
  if (config.keep_predictions) r.predictions.resize(T);

  auto cls = classifier.clone();
  auto pred = predictor.clone();
  std::vector<double> x(B * F), forecast(B * F);
  const double* s = series.raw();
  auto write = [&](std::size_t t, std::span<const double> y) {
    if (y.size() != B) throw ShapeError("classifier output has " + std::to_string(y.size()) + " entries");
    for (std::size_t b = 0; b < B; ++b) r.output[b * T + (t - 1)] = y[b];
  };

  for (std::size_t t = 1; t <= T; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      const double* row = s + (b * T + (t - 1)) * F;
      std::copy(row, row + F, x.begin() + static_cast<std::ptrdiff_t>(b * F));
    }
    cls->step(x.data());
    pred->step(x.data());
    if (config.only_history && *config.only_history != t) continue;
    if (t < config.warmup) {
      r.warmup[t - 1] = true;
      write(t, cls->output());
      continue;
    }
    auto c2 = cls->clone();
    auto p2 = pred->clone();
    const auto first = pred->output();
    if (first.size() != B * F) throw ShapeError("predictor output has " + std::to_string(first.size()) + " entries");
    forecast.assign(first.begin(), first.end());
    std::vector<double>* kept = config.keep_predictions ? &r.predictions[t - 1] : nullptr;
    if (kept) kept->assign(B * (T - t) * F, 0.0);
    for (std::size_t tp = t + 1; tp <= T; ++tp) {
      if (kept) {
        for (std::size_t b = 0; b < B; ++b) {
          std::copy(forecast.begin() + static_cast<std::ptrdiff_t>(b * F),
                    forecast.begin() + static_cast<std::ptrdiff_t>((b + 1) * F),
                    kept->begin() + static_cast<std::ptrdiff_t>((b * (T - t) + (tp - t - 1)) * F));
        }
      }
      c2->step(forecast.data());
      p2->step(forecast.data());
      if (counters) {
        ++counters->classifier_unroll_steps;
        ++counters->predictor_unroll_steps;
      }
      const auto next = p2->output();
      forecast.assign(next.begin(), next.end());
    }
    write(t, c2->output());
  }
  return r;
}

PscResult psc_classify(const PscConfig& config, const LstmModel& classifier, const LstmModel& predictor,
                       const Tensor& series, PscCounters* counters) {
  if (series.rank() != 3) throw ShapeError("psc expects [B x T x F] series, got " + shape_string(series.shape()));
  if (classifier.config.variant != LstmVariant::kMtm) {
    throw Error("psc classifier must be MTM, got " + std::string(variant_name(classifier.config.variant)));
  }
  if (predictor.config.variant != LstmVariant::kPredictor) {
    throw Error("psc predictor must be PREDICTOR, got " + std::string(variant_name(predictor.config.variant)));
  }
  if (classifier.config.input_features != predictor.config.input_features) {
    throw Error("psc models disagree on the feature count");
  }
  const std::size_t B = series.dim(0);
  LstmClassifierStepper c(classifier, B);
  LstmPredictorStepper p(predictor, B);
  return psc_classify(config, c, p, series, counters);
}

}  // namespace earlycast
