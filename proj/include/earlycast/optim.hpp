#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "earlycast/tensor.hpp"

namespace earlycast {

struct AdamConfig {
  double eta = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// Moment estimates for one list of parameters, in a fixed order.
struct AdamState {
  AdamConfig config;
  std::size_t step_count = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

/// One bias-corrected Adam update using each parameter's grad field.
/// Moment buffers are sized on the first call; later calls must pass
/// parameters of the same lengths in the same order.
void adam_step(AdamState& state, std::span<Tensor* const> params);

/// Same update on raw arrays (one value/gradient pair per parameter).
void adam_step(AdamState& state, std::span<const std::span<double>> values,
               std::span<const std::span<const double>> grads);

}  // namespace earlycast
