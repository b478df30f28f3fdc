#include "earlycast/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "earlycast/error.hpp"
#include "earlycast/graph.hpp"

namespace earlycast {

namespace {

void check_lengths(const char* what, std::span<const double> p, std::span<const double> t) {
  if (p.empty()) throw ShapeError(std::string(what) + ": empty input");
  if (p.size() != t.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(p.size()) + " predictions vs " +
                     std::to_string(t.size()) + " targets");
  }
}

}  // namespace

double bce_value(std::span<const double> predictions, std::span<const double> targets) {
  check_lengths("bce", predictions, targets);
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double p = std::clamp(predictions[i], kBceClamp, 1.0 - kBceClamp);
    total -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  return total / static_cast<double>(predictions.size());
}

double mse_value(std::span<const double> predictions, std::span<const double> targets) {
  check_lengths("mse", predictions, targets);
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    total += d * d;
  }
  return total / static_cast<double>(predictions.size());
}

}  // namespace earlycast
