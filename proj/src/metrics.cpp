#include "earlycast/metrics.hpp"

#include <string>

#include "earlycast/error.hpp"

namespace earlycast {

void DecisionThresholds::validate() const {
  if (!(0.0 < lo && lo < round && round < hi && hi < 1.0)) {
    throw Error("thresholds must satisfy 0 < lo < round < hi < 1");
  }
}

namespace {

std::size_t common_length(std::span<const TrialEvaluation> evals) {
  if (evals.empty()) throw Error("no evaluations to score");
  const std::size_t len = evals.front().trace.size();
  for (const auto& e : evals) {
    if (e.trace.size() != len || len == 0) {
      throw ShapeError("trial " + std::to_string(e.trial_id) + " has a trace of length " +
                       std::to_string(e.trace.size()) + ", expected " + std::to_string(len));
    }
  }
  return len;
}

template <typename Decide>
AccuracyCurve curve(std::span<const TrialEvaluation> evals, Decide decide) {
  const std::size_t len = common_length(evals);
  AccuracyCurve out;
  out.n = evals.size();
  out.accuracy.assign(len, 0.0);
  out.correct.assign(len, 0);
  out.decisive.assign(len, 0);
  for (const auto& e : evals) {
    for (std::size_t t = 0; t < len; ++t) {
      const int d = decide(e.trace[t]);
      if (d < 0) continue;
      ++out.decisive[t];
      if (d == e.label) ++out.correct[t];
    }
  }
  for (std::size_t t = 0; t < len; ++t) out.accuracy[t] = static_cast<double>(out.correct[t]) / static_cast<double>(out.n);
  return out;
}

}  // namespace

AccuracyCurve accuracy_curve_50(std::span<const TrialEvaluation> evals, const DecisionThresholds& th) {
  return curve(evals, [&](double y) { return y >= th.round ? 1 : 0; });
}

AccuracyCurve accuracy_curve_75(std::span<const TrialEvaluation> evals, const DecisionThresholds& th) {
  return curve(evals, [&](double y) { return y >= th.hi ? 1 : y <= th.lo ? 0 : -1; });
}

std::optional<std::size_t> ttd(std::span<const double> trace, const DecisionThresholds& th) {
  if (trace.empty()) throw Error("empty trace");
  const double last = trace.back();
  if (!(last >= th.hi || last <= th.lo)) return std::nullopt;
  for (std::size_t t = trace.size(); t >= 2; --t) {
    const double prev = trace[t - 2], cur = trace[t - 1];
    if ((prev < th.hi && cur >= th.hi) || (prev > th.lo && cur <= th.lo)) return t;
  }
  return 1;
}

std::optional<std::size_t> ttcd(std::span<const double> trace, int label, const DecisionThresholds& th) {
  const auto t = ttd(trace, th);
  if (!t) return std::nullopt;
  const int decision = trace.back() >= th.hi ? 1 : 0;
  if (decision != label) return std::nullopt;
  return t;
}

MetricsReport aggregate(const std::string& model, std::span<const TrialEvaluation> evals, const DecisionThresholds& th) {
  th.validate();
  MetricsReport r;
  r.model = model;
  r.n = evals.size();
  r.acc50 = accuracy_curve_50(evals, th);
  r.acc75 = accuracy_curve_75(evals, th);
  auto& d = r.decisions;
  for (const auto& e : evals) {
    if (const auto t = ttd(e.trace, th)) {
      ++d.n_decisions;
      d.ttd_sum += static_cast<double>(*t);
    }
    if (const auto t = ttcd(e.trace, e.label, th)) {
      ++d.n_correct;
      d.ttcd_sum += static_cast<double>(*t);
    }
    if ((e.drop_kind == DropKind::kCatch || e.drop_kind == DropKind::kMiss) && e.contact_frame >= 1 &&
        e.contact_frame <= e.trace.size()) {
      ++r.early_pool;
      const double y = e.trace[e.contact_frame - 1];
      const int decision = y >= th.hi ? 1 : y <= th.lo ? 0 : -1;
      if (decision >= 0) ++r.early_decisive;
      if (decision == e.label) ++r.early_correct;
    }
  }
  if (d.n_decisions) d.mttd_steps = d.ttd_sum / static_cast<double>(d.n_decisions);
  if (d.n_correct) d.mttcd_steps = d.ttcd_sum / static_cast<double>(d.n_correct);
  return r;
}

}  // namespace earlycast
