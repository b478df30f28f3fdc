#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "earlycast/data.hpp"
#include "earlycast/error.hpp"

namespace earlycast {

std::string feature_name(std::size_t column) {
  if (column == kBallX) return "ballx";
  if (column == kBallY) return "bally";
  if (column >= kFeatureCount) throw Error("no feature column " + std::to_string(column));
  return "m" + std::to_string(column / 2 + 1) + (column % 2 ? "y" : "x");
}

std::string_view hand_side_name(HandSide side) { return side == HandSide::kLeft ? "left" : "right"; }

std::string_view drop_kind_name(DropKind kind) {
  switch (kind) {
    case DropKind::kCatch: return "catch";
    case DropKind::kJumpOff: return "jump_off";
    case DropKind::kMiss: return "miss";
    case DropKind::kUnknown: return "unknown";
  }
  return "unknown";
}

std::optional<DropKind> parse_drop_kind(std::string_view name) {
  for (auto k : {DropKind::kCatch, DropKind::kJumpOff, DropKind::kMiss, DropKind::kUnknown}) {
    if (drop_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

std::vector<double> savgol_weights(std::size_t window, std::size_t order, std::size_t position) {
  if (window % 2 == 0 || order >= window) {
    throw Error("Savitzky-Golay needs an odd window longer than the order, got window " + std::to_string(window) +
                " order " + std::to_string(order));
  }
  if (position >= window) throw Error("evaluation position outside the window");
  Eigen::MatrixXd a(window, order + 1);
  for (std::size_t i = 0; i < window; ++i) {
    const double x = static_cast<double>(i) - static_cast<double>(position);
    double p = 1.0;
    for (std::size_t k = 0; k <= order; ++k) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = p;
      p *= x;
    }
  }
  // The fitted value at the evaluation point is the constant coefficient,
  // i.e. the first row of the pseudo-inverse.
  const Eigen::MatrixXd pinv = a.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(window, window));
  std::vector<double> w(window);
  for (std::size_t i = 0; i < window; ++i) w[i] = pinv(0, static_cast<Eigen::Index>(i));
  return w;
}

Tensor savgol_smooth(const Tensor& series, std::size_t window, std::size_t order, std::size_t columns) {
  if (series.rank() != 2) throw ShapeError("expected a [L x K] series, got " + shape_string(series.shape()));
  const std::size_t len = series.dim(0), k = series.dim(1);
  if (window >= len) {
    throw DataError("Savitzky-Golay window " + std::to_string(window) + " needs a series longer than " +
                    std::to_string(len) + " frames");
  }
  if (columns > k) throw ShapeError("cannot smooth " + std::to_string(columns) + " of " + std::to_string(k) + " columns");
  const std::size_t half = window / 2;
  std::vector<std::vector<double>> weights(window);
  for (std::size_t p = 0; p < window; ++p) weights[p] = savgol_weights(window, order, p);

  Tensor out = series;
  for (std::size_t t = 0; t < len; ++t) {
    std::size_t start, pos;
    if (t < half) {
      start = 0;
      pos = t;
    } else if (t + half >= len) {
      start = len - window;
      pos = t - start;
    } else {
      start = t - half;
      pos = half;
    }
    const auto& w = weights[pos];
    for (std::size_t c = 0; c < columns; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < window; ++i) acc += w[i] * series.at(start + i, c);
      out.at(t, c) = acc;
    }
  }
  return out;
}

Tensor to_relative(const Tensor& series) {
  if (series.rank() != 2 || series.dim(0) < 2) {
    throw DataError("relative coordinates need at least 2 frames, got " + shape_string(series.shape()));
  }
  const std::size_t len = series.dim(0), k = series.dim(1);
  Tensor out(Shape{len - 1, k});
  for (std::size_t t = 0; t + 1 < len; ++t)
    for (std::size_t c = 0; c < k; ++c) out.at(t, c) = series.at(t + 1, c) - series.at(t, c);
  return out;
}

std::size_t truncate_frames(const Tensor& series, std::size_t length, Tensor& out) {
  if (series.rank() != 2 || series.dim(0) < length) {
    throw DataError("cannot truncate " + shape_string(series.shape()) + " to " + std::to_string(length) + " frames");
  }
  const std::size_t f = series.dim(0) - length, k = series.dim(1);
  out = Tensor(Shape{length, k});
  std::copy_n(series.raw() + f * k, length * k, out.raw());
  return f;
}

ProcessedTrial preprocess_trial(const RawTrial& trial, const PreprocessConfig& config) {
  if (trial.frames.rank() != 2 || trial.frames.dim(1) != kFeatureCount) {
    throw DataError("trial " + std::to_string(trial.trial_id) + ": expected " + std::to_string(kFeatureCount) +
                    " columns, got " + shape_string(trial.frames.shape()));
  }
  const Tensor smoothed = savgol_smooth(trial.frames, config.savgol_window, config.savgol_order, kMarkerColumns);
  const Tensor relative = to_relative(smoothed);
  ProcessedTrial out;
  out.trial_id = trial.trial_id;
  out.label = trial.label;
  out.hand_side = trial.hand_side;
  out.drop_kind = trial.drop_kind;
  const std::size_t f = truncate_frames(relative, config.length, out.features);
  if (trial.contact_frame < f + 1) {
    throw DataError("trial " + std::to_string(trial.trial_id) + ": contact frame " +
                    std::to_string(trial.contact_frame) + " falls before the retained window");
  }
  out.contact_frame = trial.contact_frame - 1 - f;
  out.absolute_tail = Tensor(Shape{config.length, 4});
  constexpr std::array<std::size_t, 4> cols{kHandBaseX, kHandBaseY, kBallX, kBallY};
  for (std::size_t j = 0; j < config.length; ++j)
    for (std::size_t c = 0; c < cols.size(); ++c) out.absolute_tail.at(j, c) = smoothed.at(f + j + 1, cols[c]);
  return out;
}

std::vector<ProcessedTrial> preprocess_all(std::span<const RawTrial> trials, const PreprocessConfig& config) {
  std::vector<ProcessedTrial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) out.push_back(preprocess_trial(t, config));
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n) {
  const std::size_t train = n * 6 / 10;
  const std::size_t rest = n - train;
  return {train, rest / 2, rest - rest / 2};
}

DatasetSplit split_dataset(std::vector<ProcessedTrial> trials, Rng& rng) {
  if (trials.size() < 5) throw DataError("splitting needs at least 5 trials, got " + std::to_string(trials.size()));
  std::vector<std::size_t> order(trials.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto sizes = split_sizes(trials.size());
  DatasetSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < sizes[0] ? split.train : i < sizes[0] + sizes[1] ? split.validation : split.test;
    dst.push_back(std::move(trials[order[i]]));
  }
  return split;
}

void NormStats::apply(Tensor& features) const {
  const std::size_t k = mean.size();
  if (features.size() % k) throw ShapeError("features do not match " + std::to_string(k) + " statistics");
  double* v = features.raw();
  for (std::size_t i = 0; i < features.size(); ++i) v[i] = (v[i] - mean[i % k]) / stddev[i % k];
}

void NormStats::invert(Tensor& features) const {
  const std::size_t k = mean.size();
  if (features.size() % k) throw ShapeError("features do not match " + std::to_string(k) + " statistics");
  double* v = features.raw();
  for (std::size_t i = 0; i < features.size(); ++i) v[i] = v[i] * stddev[i % k] + mean[i % k];
}

NormStats compute_norm_stats(std::span<const ProcessedTrial> train) {
  if (train.empty()) throw DataError("cannot normalize with an empty training split");
  const std::size_t k = train.front().features.dim(1);
  NormStats stats;
  stats.mean.assign(k, 0.0);
  stats.stddev.assign(k, 0.0);
  std::size_t count = 0;
  for (const auto& t : train) {
    if (t.features.dim(1) != k) throw DataError("trial " + std::to_string(t.trial_id) + " has a different width");
    for (std::size_t r = 0; r < t.features.dim(0); ++r)
      for (std::size_t c = 0; c < k; ++c) stats.mean[c] += t.features.at(r, c);
    count += t.features.dim(0);
  }
  for (double& m : stats.mean) m /= static_cast<double>(count);
  for (const auto& t : train)
    for (std::size_t r = 0; r < t.features.dim(0); ++r)
      for (std::size_t c = 0; c < k; ++c) {
        const double d = t.features.at(r, c) - stats.mean[c];
        stats.stddev[c] += d * d;
      }
  for (std::size_t c = 0; c < k; ++c) {
    stats.stddev[c] = std::sqrt(stats.stddev[c] / static_cast<double>(count));
    if (!(stats.stddev[c] > 0.0)) {
      throw DataError("feature " + (k == kFeatureCount ? feature_name(c) : std::to_string(c)) +
                      " has zero variance in the training split");
    }
  }
  return stats;
}

NormStats normalize(DatasetSplit& split) {
  NormStats stats = compute_norm_stats(split.train);
  for (auto* part : {&split.train, &split.validation, &split.test})
    for (auto& t : *part) stats.apply(t.features);
  return stats;
}

SequenceBatch to_batch(std::span<const ProcessedTrial> trials) {
  if (trials.empty()) throw DataError("cannot batch zero trials");
  const std::size_t steps = trials.front().features.dim(0), k = trials.front().features.dim(1);
  SequenceBatch batch;
  batch.features = Tensor(Shape{trials.size(), steps, k});
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (trials[i].features.shape() != Shape{steps, k}) {
      throw DataError("trial " + std::to_string(trials[i].trial_id) + " has shape " +
                      shape_string(trials[i].features.shape()));
    }
    std::copy_n(trials[i].features.raw(), steps * k, batch.features.raw() + i * steps * k);
    batch.labels.push_back(static_cast<double>(trials[i].label));
  }
  return batch;
}

std::uint64_t split_hash(std::span<const ProcessedTrial> trials) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& t : trials) {
    feed(&t.trial_id, sizeof t.trial_id);
    feed(&t.label, sizeof t.label);
    feed(t.features.raw(), t.features.size() * sizeof(double));
  }
  return h;
}

double ball_hand_distance(const ProcessedTrial& trial, std::size_t t) {
  if (trial.absolute_tail.rank() != 2 || t >= trial.absolute_tail.dim(0)) {
    throw Error("trial " + std::to_string(trial.trial_id) + ": frame " + std::to_string(t) + " out of range");
  }
  return std::hypot(trial.absolute_tail.at(t, 0) - trial.absolute_tail.at(t, 2),
                    trial.absolute_tail.at(t, 1) - trial.absolute_tail.at(t, 3));
}

}  // namespace earlycast
