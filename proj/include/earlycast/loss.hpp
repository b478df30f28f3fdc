#pragma once

#include <span>

namespace earlycast {

// Plain-array loss values. The graph's bce/mse nodes compute the same
// formulas; these are used where no gradient is needed (validation).

/// Mean binary cross-entropy, predictions clamped to [1e-7, 1 - 1e-7].
double bce_value(std::span<const double> predictions, std::span<const double> targets);

double mse_value(std::span<const double> predictions, std::span<const double> targets);

}  // namespace earlycast
