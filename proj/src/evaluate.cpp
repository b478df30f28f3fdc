#include "earlycast/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "earlycast/error.hpp"

namespace earlycast {

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

constexpr std::size_t kChunk = 64;

TrialEvaluation blank(const ProcessedTrial& t) {
  TrialEvaluation e;
  e.trial_id = t.trial_id;
  e.label = t.label;
  e.contact_frame = t.contact_frame;
  e.drop_kind = t.drop_kind;
  return e;
}

void check_features(std::span<const ProcessedTrial> trials, std::size_t features, const std::string& model) {
  for (const auto& t : trials) {
    if (t.features.rank() != 2 || t.features.dim(1) != features) {
      throw DataError(model + " expects " + std::to_string(features) + " features, trial " +
                      std::to_string(t.trial_id) + " has shape " + shape_string(t.features.shape()));
    }
  }
}

// Fills evals[i].trace from a [B x T] row-major output for chunk rows.
template <typename Forward>
std::vector<TrialEvaluation> per_step(std::span<const ProcessedTrial> trials, std::size_t workers, Forward forward) {
  std::vector<TrialEvaluation> evals;
  evals.reserve(trials.size());
  for (const auto& t : trials) evals.push_back(blank(t));
  const std::size_t chunks = (trials.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, workers, [&](std::size_t c) {
    const auto part = trials.subspan(c * kChunk, std::min(kChunk, trials.size() - c * kChunk));
    const SequenceBatch batch = to_batch(part);
    const std::size_t T = batch.steps();
    const std::vector<double> out = forward(batch.features);
    for (std::size_t i = 0; i < part.size(); ++i) {
      auto& trace = evals[c * kChunk + i].trace;
      trace.assign(out.begin() + static_cast<std::ptrdiff_t>(i * T), out.begin() + static_cast<std::ptrdiff_t>((i + 1) * T));
    }
  });
  return evals;
}

}  // namespace

std::vector<TrialEvaluation> evaluate_lstm(const LstmModel& model, std::span<const ProcessedTrial> trials,
                                           std::size_t workers) {
  const std::string name(variant_name(model.config.variant));
  if (!model.config.has_classifier()) throw Error(name + " has no classification head");
  check_features(trials, model.config.input_features, name);
  return per_step(trials, workers, [&](const Tensor& x) { return forward_sequence(model, x).classification; });
}

std::vector<TrialEvaluation> evaluate_tcn(const TcnModel& model, std::span<const ProcessedTrial> trials,
                                          std::size_t workers) {
  check_features(trials, model.config.input_features, model.config.name);
  return per_step(trials, workers, [&](const Tensor& x) { return tcn_forward(model, x); });
}

PscEvaluation evaluate_psc(const LstmModel& classifier, const LstmModel& predictor,
                          std::span<const ProcessedTrial> trials, const PscConfig& config, std::size_t workers) {
  check_features(trials, classifier.config.input_features, "PSC");
  PscEvaluation r;
  r.evals.reserve(trials.size());
  for (const auto& t : trials) r.evals.push_back(blank(t));
  if (config.keep_predictions) r.predictions.resize(trials.size());
  const std::size_t chunks = (trials.size() + kChunk - 1) / kChunk;
  std::vector<std::vector<bool>> warmups(chunks);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t first = c * kChunk;
    const auto part = trials.subspan(first, std::min(kChunk, trials.size() - first));
    const SequenceBatch batch = to_batch(part);
    const std::size_t B = part.size(), T = batch.steps(), F = batch.feature_count();
    const PscResult res = psc_classify(config, classifier, predictor, batch.features);
    warmups[c] = res.warmup;
    for (std::size_t i = 0; i < B; ++i) {
      r.evals[first + i].trace.assign(res.output.begin() + static_cast<std::ptrdiff_t>(i * T),
                                      res.output.begin() + static_cast<std::ptrdiff_t>((i + 1) * T));
      if (!config.keep_predictions) continue;
      auto& mine = r.predictions[first + i];
      mine.resize(T);
      for (std::size_t t = 1; t <= T; ++t) {
        const auto& all = res.predictions[t - 1];
        if (all.empty()) continue;
        const std::size_t len = (T - t) * F;
        mine[t - 1].assign(all.begin() + static_cast<std::ptrdiff_t>(i * len),
                           all.begin() + static_cast<std::ptrdiff_t>((i + 1) * len));
      }
    }
  });
  if (!warmups.empty()) r.warmup = warmups.front();
  return r;
}

std::size_t truncation_mismatches(const std::function<std::vector<double>(const Tensor&)>& forward,
                                  std::span<const ProcessedTrial> trials, std::size_t pairs, Rng& rng) {
  if (trials.empty()) throw Error("no trials to probe");
  std::size_t bad = 0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const ProcessedTrial& trial = trials[rng.below(trials.size())];
    const std::size_t T = trial.features.dim(0), F = trial.features.dim(1);
    const std::size_t t = 1 + rng.below(T);
    const std::vector<double> full = forward(trial.features);
    const Tensor prefix(Shape{t, F}, std::vector<double>(trial.features.raw(), trial.features.raw() + t * F));
    const std::vector<double> part = forward(prefix);
    if (part.size() != t || full.size() != T || part.back() != full[t - 1]) ++bad;
  }
  return bad;
}

}  // namespace earlycast
