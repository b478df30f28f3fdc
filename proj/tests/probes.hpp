#pragma once

#include <cmath>
#include <cstddef>

#include "earlycast/tcn_model.hpp"

namespace earlycast::testing {

/// Largest lag at which a change of one input frame reaches an output, plus
/// one. Returns 0 if an output before the perturbed frame moved.
inline std::size_t probe_receptive_field(const TcnConfig& cfg) {
  Rng rng(21);
  TcnModel m = build_tcn(cfg, rng);
  // Positive weights and inputs keep every rectifier active, so every
  // structural path carries the perturbation.
  for (Tensor* p : m.parameters())
    for (double& v : p->data()) v = 0.05 + 0.1 * std::abs(v);
  // A tiny head keeps the sigmoid away from saturation.
  for (double& v : m.head_w.data()) v *= 1e-6;
  const std::size_t steps = 200, at = 20;
  Tensor x(Shape{1, steps, cfg.input_features});
  for (double& v : x.data()) v = rng.uniform(0.5, 1.0);
  const auto base = tcn_forward(m, x);
  for (std::size_t f = 0; f < cfg.input_features; ++f) x[at * cfg.input_features + f] += 1.0;
  const auto moved = tcn_forward(m, x);
  std::size_t last = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    if (moved[t] != base[t]) {
      if (t < at) return 0;
      last = t;
    }
  }
  return last - at + 1;
}

}  // namespace earlycast::testing
